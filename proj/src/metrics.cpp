#include "epan/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace epan {

double psnr(const Image& a, const Image& b, double max_value) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
        throw dimension_error("psnr: image shapes differ (" + std::to_string(a.channels) + "," +
                              std::to_string(a.height) + "," + std::to_string(a.width) + ") vs (" +
                              std::to_string(b.channels) + "," + std::to_string(b.height) + "," +
                              std::to_string(b.width) + ")");
    }
    if (max_value <= 0.0) {
        throw parameter_error("psnr: max_value must be > 0");
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(a.data.size());
    if (mse == 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
}

namespace {

// Normalized 1-D Gaussian window taps.
std::vector<double> ssim_window(int size, double sigma) {
    std::vector<double> w(size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) {
        v /= sum;
    }
    return w;
}

// Separable valid-region filtering: rows then columns.
std::vector<double> filter_valid(const std::vector<double>& img, int H, int W,
                                 const std::vector<double>& win) {
    const int k = static_cast<int>(win.size());
    const int Wv = W - k + 1;
    const int Hv = H - k + 1;
    std::vector<double> rows(static_cast<std::size_t>(H) * Wv);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < Wv; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                acc += win[i] * img[static_cast<std::size_t>(y) * W + x + i];
            }
            rows[static_cast<std::size_t>(y) * Wv + x] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(Hv) * Wv);
    for (int y = 0; y < Hv; ++y) {
        for (int x = 0; x < Wv; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                acc += win[i] * rows[static_cast<std::size_t>(y + i) * Wv + x];
            }
            out[static_cast<std::size_t>(y) * Wv + x] = acc;
        }
    }
    return out;
}

} // namespace

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
        throw dimension_error("ssim: image shapes differ");
    }
    if (a.height < params.window || a.width < params.window) {
        throw dimension_error("ssim: image " + std::to_string(a.width) + "x" +
                              std::to_string(a.height) + " is smaller than the " +
                              std::to_string(params.window) + "-pixel window");
    }
    const Image ga = to_grayscale(a);
    const Image gb = to_grayscale(b);
    const int H = ga.height, W = ga.width;
    std::vector<double> xa(ga.data.begin(), ga.data.end());
    std::vector<double> xb(gb.data.begin(), gb.data.end());
    std::vector<double> xaa(xa.size()), xbb(xa.size()), xab(xa.size());
    for (std::size_t i = 0; i < xa.size(); ++i) {
        xaa[i] = xa[i] * xa[i];
        xbb[i] = xb[i] * xb[i];
        xab[i] = xa[i] * xb[i];
    }
    const std::vector<double> win = ssim_window(params.window, params.sigma);
    const auto mu_a = filter_valid(xa, H, W, win);
    const auto mu_b = filter_valid(xb, H, W, win);
    const auto m_aa = filter_valid(xaa, H, W, win);
    const auto m_bb = filter_valid(xbb, H, W, win);
    const auto m_ab = filter_valid(xab, H, W, win);

    const double L = params.dynamic_range;
    const double c1 = (params.k1 * L) * (params.k1 * L);
    const double c2 = (params.k2 * L) * (params.k2 * L);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

Image infer_image(const Network<float>& net, const Image& blurry, const CannyParams& edge_params) {
    NoGradGuard no_grad;
    const Image edges = canny(blurry, edge_params);
    const int divisor = net.config.spatial_divisor();
    const Image padded = reflect_pad_to_multiple(blurry, divisor);
    const Image padded_edges = reflect_pad_to_multiple(edges, divisor);
    auto result = forward(net, image_to_tensor<float>(padded), image_to_tensor<float>(padded_edges));
    Image out = tensor_to_image(*result.deblurred);
    if (out.height != blurry.height || out.width != blurry.width) {
        out = crop_image(out, 0, 0, blurry.width, blurry.height);
    }
    return out;
}

EvalReport evaluate(const Network<float>& net, const DatasetManifest& manifest,
                    const std::string& split, const CannyParams& edge_params,
                    const std::string& data_root) {
    EvalReport report;
    const std::string root = data_root.empty() ? std::string(".") : data_root;
    for (const ManifestRecord& rec : manifest.records) {
        if (rec.split != split) {
            continue;
        }
        const std::string sharp_path = root + "/" + rec.sharp_path;
        const std::string blurry_path = root + "/" + rec.blurry_path;
        const Image sharp = read_png(sharp_path);
        const Image blurry = read_png(blurry_path);
        const Image deblurred = infer_image(net, blurry, edge_params);
        EvalEntry entry;
        entry.id = rec.blurry_path;
        entry.psnr = psnr(deblurred, sharp, 1.0);
        entry.ssim = ssim(deblurred, sharp);
        report.per_image.push_back(std::move(entry));
    }
    if (report.per_image.empty()) {
        throw data_error("evaluate: split '" + split + "' holds no records");
    }
    double psum = 0.0, ssum = 0.0;
    for (const EvalEntry& e : report.per_image) {
        psum += e.psnr;
        ssum += e.ssim;
    }
    report.count = static_cast<int>(report.per_image.size());
    report.mean_psnr = psum / report.count;
    report.mean_ssim = ssum / report.count;
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["count"] = report.count;
    j["mean_psnr"] = report.mean_psnr;
    j["mean_ssim"] = report.mean_ssim;
    nlohmann::json images = nlohmann::json::array();
    for (const EvalEntry& e : report.per_image) {
        images.push_back({{"id", e.id}, {"psnr", e.psnr}, {"ssim", e.ssim}});
    }
    j["images"] = images;
    return j.dump(2);
}

std::string report_table(const std::vector<std::string>& row_labels,
                         const std::vector<EvalReport>& reports) {
    if (row_labels.size() != reports.size()) {
        throw contract_error("report_table: one label per report required");
    }
    std::size_t label_w = 8;
    for (const std::string& l : row_labels) {
        label_w = std::max(label_w, l.size());
    }
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(label_w) + 2) << "method"
        << std::right << std::setw(10) << "PSNR" << std::setw(10) << "SSIM"
        << std::setw(8) << "n" << "\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out << std::left << std::setw(static_cast<int>(label_w) + 2) << row_labels[i] << std::right
            << std::setw(10) << std::fixed << std::setprecision(2) << reports[i].mean_psnr
            << std::setw(10) << std::setprecision(3) << reports[i].mean_ssim
            << std::setw(8) << reports[i].count << "\n";
    }
    return out.str();
}

} // namespace epan
