#pragma once

#include <set>
#include <string>
#include <vector>

#include "epan/image.hpp"

namespace epan {

struct BoundingBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    double score = 0.0;
};

// Intersection over union of two boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy descending-score suppression; ties break by input index. Survivors
// have pairwise IoU <= threshold.
std::vector<BoundingBox> nms(const std::vector<BoundingBox>& boxes, double iou_threshold);

// importance = score * centrality * relative_area, where centrality is
// 1 - (distance of the box center from the image center) / (half diagonal)
// and relative_area is the box/image area ratio scaled so that ratios of 1/4
// or more count as 1.
double box_importance(const BoundingBox& box, int image_w, int image_h);

std::vector<BoundingBox> importance_filter(const std::vector<BoundingBox>& boxes, int image_w,
                                           int image_h, double min_importance);

struct AlignmentResult {
    int offset_x = 0; // signed, relative to the initial box
    int offset_y = 0;
    double psnr = 0.0; // score of the chosen position
};

// Exhaustive stride-1 window search over the doubled area centered on
// init_box (clamped to the image). Returns the PSNR-argmax position; ties
// break by smaller |dx|+|dy|, then row-major order.
AlignmentResult align_pair(const Image& sharp_crop, const Image& blurry_full,
                           const BoundingBox& init_box);

// k x k non-negative taps summing to 1 whose support is an anti-aliased line
// segment through the center.
struct MotionKernel {
    int size = 0;
    std::vector<float> values; // row-major

    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * size + x]; }
};

MotionKernel make_linear_kernel(double length, double angle, int size);

// Per-channel 2-D correlation with reflective borders. Constant images are
// fixed points for normalized kernels.
Image blur_with_kernel(const Image& sharp, const MotionKernel& kernel);

// Pixelwise mean of a clip of frames (the frame-averaging blur mechanism).
Image blur_by_averaging(const std::vector<Image>& frames);

struct ManifestRecord {
    std::string sharp_path;
    std::string blurry_path;
    std::string scenario;
    std::string split; // "train" or "test"
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
};

DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

// Throws data_error if any scenario contributes to both splits.
void verify_scenario_disjoint(const DatasetManifest& manifest);

// Labels every record train/test by scenario membership. train_scenarios must
// be a nonempty proper subset of the scenarios present.
DatasetManifest split_by_scenario(const DatasetManifest& manifest,
                                  const std::set<std::string>& train_scenarios);

struct BoxRecord {
    std::string image; // stem of the image the box belongs to
    BoundingBox box;
};

// Line-delimited JSON sidecar {image, x, y, w, h, score}.
std::vector<BoxRecord> read_boxes(const std::string& path);
void write_boxes(const std::vector<BoxRecord>& boxes, const std::string& path);

} // namespace epan
