#pragma once

#include <string>
#include <vector>

#include "epan/dataset.hpp"
#include "epan/edge.hpp"
#include "epan/image.hpp"
#include "epan/model.hpp"

namespace epan {

// PSNR quickly exceeds any meaningful range as MSE approaches zero; identical
// inputs (zero MSE) return this cap, which also keeps alignment argmaxes
// well-defined.
constexpr double kPsnrCap = 99.0;

// 10 * log10(max_value^2 / MSE), capped at kPsnrCap.
double psnr(const Image& a, const Image& b, double max_value);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

// Mean structural similarity over all valid window positions; color inputs
// are converted to luminance first.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

struct EvalEntry {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<EvalEntry> per_image;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    int count = 0;
};

// Scores one manifest split: per record, detect edges on the blurry image,
// run the network (reflect-padding to the model's spatial divisor and
// cropping back), discard the enhanced edge map, and compare the deblurred
// output against the sharp image. Paths resolve relative to data_root.
EvalReport evaluate(const Network<float>& net, const DatasetManifest& manifest,
                    const std::string& split, const CannyParams& edge_params,
                    const std::string& data_root);

// Runs the forward pass on one image, handling the pad/crop contract.
Image infer_image(const Network<float>& net, const Image& blurry, const CannyParams& edge_params);

std::string report_to_json(const EvalReport& report);
std::string report_table(const std::vector<std::string>& row_labels,
                         const std::vector<EvalReport>& reports);

} // namespace epan
