#pragma once

#include <string>
#include <vector>

#include "epan/errors.hpp"
#include "epan/tensor.hpp"

namespace epan {

// Channel-major (planar) real-valued image, values nominally in [0,1].
// Edge maps are the single-channel case.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data; // data[(c*height + y)*width + x]

    Image() = default;
    Image(int c, int h, int w) : channels(c), height(h), width(w),
                                 data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t numel() const { return data.size(); }
};

// 8-bit PNG I/O. Reading yields a 1-channel (grayscale) or 3-channel (RGB)
// image in [0,1]; palette images expand to RGB, alpha is dropped.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

Image crop_image(const Image& img, int x, int y, int w, int h);
Image flip_horizontal(const Image& img);
Image rotate90(const Image& img, int quarter_turns);

// Reflect-pads height/width up to the next multiple; out params receive the
// original extents for cropping back.
Image reflect_pad_to_multiple(const Image& img, int multiple);

template <class T>
TensorPtr<T> image_to_tensor(const Image& img, bool requires_grad = false) {
    std::vector<T> d(img.data.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = static_cast<T>(img.data[i]);
    }
    return tensor_from<T>({1, img.channels, img.height, img.width}, std::move(d), requires_grad);
}

// Stacks equally shaped images into one (N,C,H,W) tensor.
template <class T>
TensorPtr<T> stack_images(const std::vector<Image>& images, bool requires_grad = false) {
    if (images.empty()) {
        throw data_error("stack_images: empty batch");
    }
    const Image& first = images.front();
    std::vector<T> d;
    d.reserve(images.size() * first.data.size());
    for (const Image& img : images) {
        if (img.channels != first.channels || img.height != first.height ||
            img.width != first.width) {
            throw dimension_error("stack_images: images in a batch must share shape");
        }
        for (float v : img.data) {
            d.push_back(static_cast<T>(v));
        }
    }
    return tensor_from<T>({static_cast<int>(images.size()), first.channels, first.height, first.width},
                          std::move(d), requires_grad);
}

template <class T>
Image tensor_to_image(const Tensor<T>& t, int batch_index = 0) {
    if (t.shape.size() != 4) {
        throw dimension_error("tensor_to_image: tensor must be 4-D");
    }
    if (batch_index < 0 || batch_index >= t.shape[0]) {
        throw parameter_error("tensor_to_image: batch index out of range");
    }
    Image img(t.shape[1], t.shape[2], t.shape[3]);
    const std::size_t n = img.data.size();
    const T* src = t.data.data() + static_cast<std::size_t>(batch_index) * n;
    for (std::size_t i = 0; i < n; ++i) {
        img.data[i] = static_cast<float>(src[i]);
    }
    return img;
}

} // namespace epan
