#include "epan/edge.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace epan {

namespace {

constexpr double kPi = 3.14159265358979323846;

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

void require_single_channel(const Image& plane, const char* who) {
    if (plane.channels != 1) {
        throw parameter_error(std::string(who) + ": expected a single-channel plane, got " +
                              std::to_string(plane.channels) + " channels");
    }
}

} // namespace

void CannyParams::validate() const {
    if (gaussian_sigma <= 0.0) {
        throw parameter_error("canny: gaussian_sigma must be > 0");
    }
    if (low_threshold < 0.0 || high_threshold > 1.0 || !(low_threshold < high_threshold)) {
        throw parameter_error("canny: thresholds must satisfy 0 <= low < high <= 1");
    }
}

Image to_grayscale(const Image& image) {
    if (image.channels == 1) {
        return image;
    }
    if (image.channels != 3) {
        throw parameter_error("to_grayscale: channel count must be 1 or 3, got " +
                              std::to_string(image.channels));
    }
    Image out(1, image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            out.at(0, y, x) = 0.299f * image.at(0, y, x) + 0.587f * image.at(1, y, x) +
                              0.114f * image.at(2, y, x);
        }
    }
    return out;
}

Image gaussian_blur(const Image& plane, double sigma) {
    if (sigma <= 0.0) {
        throw parameter_error("gaussian_blur: sigma must be > 0, got " + std::to_string(sigma));
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        kernel[i + radius] = v;
        sum += v;
    }
    for (double& v : kernel) {
        v /= sum;
    }

    const int H = plane.height, W = plane.width;
    Image tmp(plane.channels, H, W);
    Image out(plane.channels, H, W);
    for (int c = 0; c < plane.channels; ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[i + radius] * plane.at(c, y, reflect_index(x + i, W));
                }
                tmp.at(c, y, x) = static_cast<float>(acc);
            }
        }
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[i + radius] * tmp.at(c, reflect_index(y + i, H), x);
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

std::pair<Image, Image> sobel_gradients(const Image& plane) {
    require_single_channel(plane, "sobel_gradients");
    const int H = plane.height, W = plane.width;
    Image mag(1, H, W);
    Image orient(1, H, W);
    double max_mag = 0.0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double gx = 0.0, gy = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const double v = plane.at(0, reflect_index(y + dy, H), reflect_index(x + dx, W));
                    const int wx = dx * (dy == 0 ? 2 : 1);
                    const int wy = dy * (dx == 0 ? 2 : 1);
                    gx += wx * v;
                    gy += wy * v;
                }
            }
            const double m = std::sqrt(gx * gx + gy * gy);
            mag.at(0, y, x) = static_cast<float>(m);
            orient.at(0, y, x) = static_cast<float>(std::atan2(gy, gx));
            max_mag = std::max(max_mag, m);
        }
    }
    if (max_mag > 0.0) {
        for (float& v : mag.data) {
            v = static_cast<float>(v / max_mag);
        }
    }
    return {mag, orient};
}

Image non_max_suppress(const Image& magnitude, const Image& orientation) {
    require_single_channel(magnitude, "non_max_suppress");
    const int H = magnitude.height, W = magnitude.width;
    Image out(1, H, W);
    auto mag_at = [&](int y, int x) -> float {
        if (y < 0 || y >= H || x < 0 || x >= W) {
            return 0.0f;
        }
        return magnitude.at(0, y, x);
    };
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const float m = magnitude.at(0, y, x);
            if (m == 0.0f) {
                continue;
            }
            // fold to [0, pi) and quantize to 4 directions
            double a = std::fmod(static_cast<double>(orientation.at(0, y, x)) + kPi, kPi);
            float n1, n2;
            if (a < kPi / 8 || a >= 7 * kPi / 8) {
                n1 = mag_at(y, x - 1);
                n2 = mag_at(y, x + 1);
            } else if (a < 3 * kPi / 8) {
                n1 = mag_at(y - 1, x + 1);
                n2 = mag_at(y + 1, x - 1);
            } else if (a < 5 * kPi / 8) {
                n1 = mag_at(y - 1, x);
                n2 = mag_at(y + 1, x);
            } else {
                n1 = mag_at(y - 1, x - 1);
                n2 = mag_at(y + 1, x + 1);
            }
            if (m >= n1 && m >= n2) {
                out.at(0, y, x) = m;
            }
        }
    }
    return out;
}

Image hysteresis(const Image& magnitude, double low, double high) {
    require_single_channel(magnitude, "hysteresis");
    const int H = magnitude.height, W = magnitude.width;
    Image out(1, H, W);
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (magnitude.at(0, y, x) >= high && out.at(0, y, x) == 0.0f) {
                out.at(0, y, x) = 1.0f;
                stack.emplace_back(y, x);
                while (!stack.empty()) {
                    auto [cy, cx] = stack.back();
                    stack.pop_back();
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int ny = cy + dy, nx = cx + dx;
                            if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                            if (out.at(0, ny, nx) == 0.0f && magnitude.at(0, ny, nx) >= low) {
                                out.at(0, ny, nx) = 1.0f;
                                stack.emplace_back(ny, nx);
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Image canny(const Image& image, const CannyParams& params) {
    params.validate();
    Image gray = to_grayscale(image);
    Image smooth = gaussian_blur(gray, params.gaussian_sigma);
    auto [mag, orient] = sobel_gradients(smooth);
    Image thin = non_max_suppress(mag, orient);
    Image edges = hysteresis(thin, params.low_threshold, params.high_threshold);
    if (params.soften) {
        edges = gaussian_blur(edges, 1.0);
        for (float& v : edges.data) {
            v = std::min(std::max(v, 0.0f), 1.0f);
        }
    }
    return edges;
}

} // namespace epan
