#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "epan/image.hpp"
#include "epan/tensor.hpp"

namespace testsupport {

struct GradCheckReport {
    bool ok = true;
    double worst = 0.0; // |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    std::size_t checked = 0;
};

// Central finite differences against reverse-mode gradients, 64-bit.
// make_loss must rebuild the graph from the leaves' current data.
inline GradCheckReport grad_check(const std::function<epan::TensorPtr<double>()>& make_loss,
                                  const std::vector<epan::TensorPtr<double>>& leaves,
                                  double h = 1e-4, double tol = 1e-4) {
    for (const auto& leaf : leaves) {
        leaf->grad.assign(leaf->numel(), 0.0);
    }
    epan::backward(make_loss());

    GradCheckReport report;
    for (const auto& leaf : leaves) {
        for (std::size_t i = 0; i < leaf->numel(); ++i) {
            const double saved = leaf->data[i];
            leaf->data[i] = saved + h;
            const double lp = make_loss()->item();
            leaf->data[i] = saved - h;
            const double lm = make_loss()->item();
            leaf->data[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = leaf->grad[i];
            const double diff = std::abs(analytic - numeric);
            const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            report.worst = std::max(report.worst, diff / scale);
            if (diff > std::max(tol * std::max(std::abs(analytic), std::abs(numeric)), 1e-8)) {
                report.ok = false;
            }
            ++report.checked;
        }
    }
    return report;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) {
        x = dist(rng);
    }
    return v;
}

// Edge-rich synthetic test image: gradient background plus solid rectangles
// and disks, values kept inside (0,1).
inline epan::Image make_test_pattern(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> color(0.1f, 0.9f);
    std::uniform_int_distribution<int> xs(0, w - 1), ys(0, h - 1);

    epan::Image img(3, h, w);
    for (int c = 0; c < 3; ++c) {
        const float base = color(rng);
        const float slope = color(rng) - 0.5f;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                img.at(c, y, x) = base + slope * (static_cast<float>(x + y) / (w + h));
            }
        }
    }
    const int rect_count = 5;
    for (int k = 0; k < rect_count; ++k) {
        const int x0 = xs(rng), y0 = ys(rng);
        const int rw = 2 + xs(rng) % std::max(2, w / 3);
        const int rh = 2 + ys(rng) % std::max(2, h / 3);
        const float r = color(rng), g = color(rng), b = color(rng);
        for (int y = y0; y < std::min(h, y0 + rh); ++y) {
            for (int x = x0; x < std::min(w, x0 + rw); ++x) {
                img.at(0, y, x) = r;
                img.at(1, y, x) = g;
                img.at(2, y, x) = b;
            }
        }
    }
    const int disk_count = 3;
    for (int k = 0; k < disk_count; ++k) {
        const int cx = xs(rng), cy = ys(rng);
        const int rad = 2 + xs(rng) % std::max(2, w / 6);
        const float r = color(rng), g = color(rng), b = color(rng);
        for (int y = std::max(0, cy - rad); y < std::min(h, cy + rad + 1); ++y) {
            for (int x = std::max(0, cx - rad); x < std::min(w, cx + rad + 1); ++x) {
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad) {
                    img.at(0, y, x) = r;
                    img.at(1, y, x) = g;
                    img.at(2, y, x) = b;
                }
            }
        }
    }
    for (float& v : img.data) {
        v = std::min(std::max(v, 0.05f), 0.95f);
    }
    return img;
}

// Pixelwise uniform noise; every window is unique, which planted-shift
// alignment tests rely on.
inline epan::Image make_noise_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    epan::Image img(3, h, w);
    for (float& v : img.data) {
        v = dist(rng);
    }
    return img;
}

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; ++i) {
            auto candidate = base / (tag + "-" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("TempDir: cannot create scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path_.string() : (path_ / rel).string();
    }

private:
    std::filesystem::path path_;
};

} // namespace testsupport
