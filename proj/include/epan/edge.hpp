#pragma once

#include <utility>

#include "epan/image.hpp"

namespace epan {

// Canny parameterization. Thresholds apply to the gradient magnitude after
// normalization by its maximum, so they live in [0,1]. The optional soften
// pass blurs the binary map (sigma 1) into a soft mask; off by default.
struct CannyParams {
    double gaussian_sigma = 1.4;
    double low_threshold = 0.3;
    double high_threshold = 0.6;
    bool soften = false;

    void validate() const;
};

// Luminance 0.299 R + 0.587 G + 0.114 B; pass-through for 1-channel input.
Image to_grayscale(const Image& image);

// Separable Gaussian with kernel radius ceil(3*sigma), reflective borders,
// kernel normalized to sum 1.
Image gaussian_blur(const Image& plane, double sigma);

// Standard 3x3 Sobel stencils with reflective borders. Magnitude is
// normalized by its maximum when that maximum is positive; orientation is
// atan2(gy, gx) in radians.
std::pair<Image, Image> sobel_gradients(const Image& plane);

// Thins ridges by suppressing pixels that are not maximal along the gradient
// direction quantized to 4 bins.
Image non_max_suppress(const Image& magnitude, const Image& orientation);

// Double-threshold hysteresis, 8-connected. Output is binary {0,1}.
Image hysteresis(const Image& magnitude, double low, double high);

// Full pipeline: grayscale -> blur -> sobel -> non-maximum suppression ->
// hysteresis. Output values are {0,1} unless params.soften is set.
Image canny(const Image& image, const CannyParams& params);

} // namespace epan
