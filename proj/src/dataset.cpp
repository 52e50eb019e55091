#include "epan/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace epan {

namespace {

int reflect_index(int i, int n) {
    if (n == 1) {
        return 0;
    }
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// PSNR over a window without materializing the crop; mirrors metrics::psnr
// with max_value 1 and the 99 dB cap.
double window_psnr(const Image& sharp, const Image& blurry, int bx, int by) {
    double sse = 0.0;
    for (int c = 0; c < sharp.channels; ++c) {
        for (int y = 0; y < sharp.height; ++y) {
            for (int x = 0; x < sharp.width; ++x) {
                const double d = static_cast<double>(sharp.at(c, y, x)) -
                                 static_cast<double>(blurry.at(c, by + y, bx + x));
                sse += d * d;
            }
        }
    }
    const double mse = sse / static_cast<double>(sharp.numel());
    if (mse == 0.0) {
        return 99.0;
    }
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

} // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
    const int x0 = std::max(a.x, b.x);
    const int y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.x + a.w, b.x + b.w);
    const int y1 = std::min(a.y + a.h, b.y + b.h);
    const double inter = static_cast<double>(std::max(0, x1 - x0)) * std::max(0, y1 - y0);
    const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<BoundingBox> nms(const std::vector<BoundingBox>& boxes, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw parameter_error("nms: iou_threshold must be in (0,1], got " +
                              std::to_string(iou_threshold));
    }
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
    std::vector<BoundingBox> kept;
    for (std::size_t idx : order) {
        bool suppressed = false;
        for (const BoundingBox& k : kept) {
            if (iou(boxes[idx], k) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(boxes[idx]);
        }
    }
    return kept;
}

double box_importance(const BoundingBox& box, int image_w, int image_h) {
    if (image_w <= 0 || image_h <= 0) {
        throw parameter_error("box_importance: image extents must be positive");
    }
    const double cx = box.x + box.w / 2.0;
    const double cy = box.y + box.h / 2.0;
    const double icx = image_w / 2.0;
    const double icy = image_h / 2.0;
    const double half_diag = std::sqrt(icx * icx + icy * icy);
    const double dist = std::sqrt((cx - icx) * (cx - icx) + (cy - icy) * (cy - icy));
    const double centrality = std::max(0.0, 1.0 - dist / half_diag);
    const double area_ratio = (static_cast<double>(box.w) * box.h) /
                              (static_cast<double>(image_w) * image_h);
    const double relative_area = std::min(1.0, area_ratio / 0.25);
    return box.score * centrality * relative_area;
}

std::vector<BoundingBox> importance_filter(const std::vector<BoundingBox>& boxes, int image_w,
                                           int image_h, double min_importance) {
    std::vector<BoundingBox> kept;
    for (const BoundingBox& b : boxes) {
        if (box_importance(b, image_w, image_h) >= min_importance) {
            kept.push_back(b);
        }
    }
    return kept;
}

AlignmentResult align_pair(const Image& sharp_crop, const Image& blurry_full,
                           const BoundingBox& init_box) {
    if (sharp_crop.width != init_box.w || sharp_crop.height != init_box.h) {
        throw contract_error("align_pair: sharp crop is " + std::to_string(sharp_crop.width) + "x" +
                             std::to_string(sharp_crop.height) + " but the initial box is " +
                             std::to_string(init_box.w) + "x" + std::to_string(init_box.h));
    }
    if (sharp_crop.channels != blurry_full.channels) {
        throw dimension_error("align_pair: channel count mismatch");
    }
    // Search area: same center, doubled extents, clamped to the image.
    const int ax0 = std::max(0, init_box.x - init_box.w / 2);
    const int ay0 = std::max(0, init_box.y - init_box.h / 2);
    const int ax1 = std::min(blurry_full.width, init_box.x - init_box.w / 2 + 2 * init_box.w);
    const int ay1 = std::min(blurry_full.height, init_box.y - init_box.h / 2 + 2 * init_box.h);
    const int px_max = ax1 - init_box.w;
    const int py_max = ay1 - init_box.h;
    if (px_max < ax0 || py_max < ay0) {
        throw geometry_error("align_pair: search area smaller than the window (box " +
                             std::to_string(init_box.w) + "x" + std::to_string(init_box.h) +
                             " in image " + std::to_string(blurry_full.width) + "x" +
                             std::to_string(blurry_full.height) + ")");
    }

    AlignmentResult best;
    double best_psnr = -1.0;
    int best_l1 = 0;
    for (int py = ay0; py <= py_max; ++py) {
        for (int px = ax0; px <= px_max; ++px) {
            const double p = window_psnr(sharp_crop, blurry_full, px, py);
            const int l1 = std::abs(px - init_box.x) + std::abs(py - init_box.y);
            if (p > best_psnr || (p == best_psnr && l1 < best_l1)) {
                best_psnr = p;
                best_l1 = l1;
                best.offset_x = px - init_box.x;
                best.offset_y = py - init_box.y;
            }
        }
    }
    best.psnr = best_psnr;
    return best;
}

MotionKernel make_linear_kernel(double length, double angle, int size) {
    if (size < 1 || size % 2 == 0) {
        throw parameter_error("make_linear_kernel: size must be odd and positive, got " +
                              std::to_string(size));
    }
    if (length < 1.0 || length > static_cast<double>(size)) {
        throw parameter_error("make_linear_kernel: length must lie in [1, size]");
    }
    MotionKernel kernel;
    kernel.size = size;
    kernel.values.assign(static_cast<std::size_t>(size) * size, 0.0f);

    const int r = size / 2;
    const double half_span = (length - 1.0) / 2.0;
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    double sum = 0.0;
    std::vector<double> weights(kernel.values.size(), 0.0);
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            // distance from the cell center to the segment through the origin
            const double t = std::clamp(x * dx + y * dy, -half_span, half_span);
            const double ex = x - t * dx;
            const double ey = y - t * dy;
            const double dist = std::sqrt(ex * ex + ey * ey);
            const double w = std::max(0.0, 1.0 - dist);
            weights[static_cast<std::size_t>(y + r) * size + (x + r)] = w;
            sum += w;
        }
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        kernel.values[i] = static_cast<float>(weights[i] / sum);
    }
    return kernel;
}

Image blur_with_kernel(const Image& sharp, const MotionKernel& kernel) {
    const int r = kernel.size / 2;
    Image out(sharp.channels, sharp.height, sharp.width);
    for (int c = 0; c < sharp.channels; ++c) {
        for (int y = 0; y < sharp.height; ++y) {
            for (int x = 0; x < sharp.width; ++x) {
                double acc = 0.0;
                for (int ky = -r; ky <= r; ++ky) {
                    const int sy = reflect_index(y + ky, sharp.height);
                    for (int kx = -r; kx <= r; ++kx) {
                        const int sx = reflect_index(x + kx, sharp.width);
                        acc += static_cast<double>(kernel.at(ky + r, kx + r)) * sharp.at(c, sy, sx);
                    }
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Image blur_by_averaging(const std::vector<Image>& frames) {
    if (frames.empty()) {
        throw data_error("blur_by_averaging: need at least one frame");
    }
    const Image& first = frames.front();
    Image out(first.channels, first.height, first.width);
    std::vector<double> acc(first.numel(), 0.0);
    for (const Image& f : frames) {
        if (f.channels != first.channels || f.height != first.height || f.width != first.width) {
            throw dimension_error("blur_by_averaging: frames must share shape");
        }
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += f.data[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        out.data[i] = static_cast<float>(acc[i] * inv);
    }
    return out;
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open manifest: " + path);
    }
    DatasetManifest manifest;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            ManifestRecord rec;
            rec.sharp_path = j.at("sharp").get<std::string>();
            rec.blurry_path = j.at("blurry").get<std::string>();
            rec.scenario = j.at("scenario").get<std::string>();
            rec.split = j.value("split", std::string("train"));
            if (rec.split != "train" && rec.split != "test") {
                throw data_error("manifest " + path + " line " + std::to_string(line_no) +
                                 ": split must be 'train' or 'test'");
            }
            manifest.records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw data_error("manifest " + path + " line " + std::to_string(line_no) +
                             ": " + e.what());
        }
    }
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot write manifest: " + path);
    }
    for (const ManifestRecord& rec : manifest.records) {
        nlohmann::json j;
        j["sharp"] = rec.sharp_path;
        j["blurry"] = rec.blurry_path;
        j["scenario"] = rec.scenario;
        j["split"] = rec.split;
        out << j.dump() << "\n";
    }
}

void verify_scenario_disjoint(const DatasetManifest& manifest) {
    std::set<std::string> train, test;
    for (const ManifestRecord& rec : manifest.records) {
        (rec.split == "train" ? train : test).insert(rec.scenario);
    }
    for (const std::string& s : train) {
        if (test.count(s)) {
            throw data_error("manifest splits are not scenario-disjoint: scenario '" + s +
                             "' appears in both train and test");
        }
    }
}

DatasetManifest split_by_scenario(const DatasetManifest& manifest,
                                  const std::set<std::string>& train_scenarios) {
    std::set<std::string> present;
    for (const ManifestRecord& rec : manifest.records) {
        present.insert(rec.scenario);
    }
    if (train_scenarios.empty()) {
        throw data_error("split_by_scenario: train scenario set is empty");
    }
    for (const std::string& s : train_scenarios) {
        if (!present.count(s)) {
            throw data_error("split_by_scenario: unknown scenario id '" + s + "'");
        }
    }
    if (train_scenarios.size() >= present.size()) {
        throw data_error("split_by_scenario: train scenarios must be a proper subset (" +
                         std::to_string(train_scenarios.size()) + " of " +
                         std::to_string(present.size()) + " requested)");
    }
    DatasetManifest out = manifest;
    for (ManifestRecord& rec : out.records) {
        rec.split = train_scenarios.count(rec.scenario) ? "train" : "test";
    }
    verify_scenario_disjoint(out);
    return out;
}

std::vector<BoxRecord> read_boxes(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open boxes sidecar: " + path);
    }
    std::vector<BoxRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            BoxRecord rec;
            rec.image = j.at("image").get<std::string>();
            rec.box.x = j.at("x").get<int>();
            rec.box.y = j.at("y").get<int>();
            rec.box.w = j.at("w").get<int>();
            rec.box.h = j.at("h").get<int>();
            rec.box.score = j.at("score").get<double>();
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw data_error("boxes sidecar " + path + " line " + std::to_string(line_no) + ": " +
                             e.what());
        }
    }
    return records;
}

void write_boxes(const std::vector<BoxRecord>& boxes, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot write boxes sidecar: " + path);
    }
    for (const BoxRecord& rec : boxes) {
        nlohmann::json j;
        j["image"] = rec.image;
        j["x"] = rec.box.x;
        j["y"] = rec.box.y;
        j["w"] = rec.box.w;
        j["h"] = rec.box.h;
        j["score"] = rec.box.score;
        out << j.dump() << "\n";
    }
}

} // namespace epan
