#include "epan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

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

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw io_error("cannot open image for reading: " + path);
    }
    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw io_error("not a PNG file: " + path);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw io_error("libpng init failed reading " + path);
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw io_error("libpng init failed reading " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("corrupt PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const png_byte color_type = png_get_color_type(png, info);
    const png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("unsupported channel count " + std::to_string(channels) + " in " + path);
    }

    std::vector<png_byte> raster(static_cast<std::size_t>(height) * width * channels);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) {
        rows[y] = raster.data() + static_cast<std::size_t>(y) * width * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(channels, static_cast<int>(height), static_cast<int>(width));
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const png_byte v = raster[(static_cast<std::size_t>(y) * width + x) * channels + c];
                img.at(c, y, x) = static_cast<float>(v) / 255.0f;
            }
        }
    }
    return img;
}

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw parameter_error("write_png: image must have 1 or 3 channels, got " +
                              std::to_string(img.channels));
    }
    if (img.height <= 0 || img.width <= 0) {
        throw parameter_error("write_png: empty image");
    }
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw io_error("cannot open image for writing: " + path);
    }

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw io_error("libpng init failed writing " + path);
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw io_error("libpng init failed writing " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("PNG write failed: " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                const float v = std::min(std::max(img.at(c, y, x), 0.0f), 1.0f);
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0f));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image crop_image(const Image& img, int x, int y, int w, int h) {
    if (w <= 0 || h <= 0) {
        throw parameter_error("crop_image: crop extents must be positive");
    }
    if (x < 0 || y < 0 || x + w > img.width || y + h > img.height) {
        throw geometry_error("crop_image: window (" + std::to_string(x) + "," + std::to_string(y) +
                             "," + std::to_string(w) + "," + std::to_string(h) +
                             ") outside image " + std::to_string(img.width) + "x" +
                             std::to_string(img.height));
    }
    Image out(img.channels, h, w);
    for (int c = 0; c < img.channels; ++c) {
        for (int yy = 0; yy < h; ++yy) {
            const float* src = &img.data[(static_cast<std::size_t>(c) * img.height + y + yy) * img.width + x];
            float* dst = &out.data[(static_cast<std::size_t>(c) * h + yy) * w];
            std::copy(src, src + w, dst);
        }
    }
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
            }
        }
    }
    return out;
}

Image rotate90(const Image& img, int quarter_turns) {
    int k = quarter_turns % 4;
    if (k < 0) k += 4;
    if (k == 0) {
        return img;
    }
    const bool swap = (k % 2) == 1;
    Image out(img.channels, swap ? img.width : img.height, swap ? img.height : img.width);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                int ny = 0, nx = 0;
                switch (k) {
                    case 1: ny = x; nx = img.height - 1 - y; break;            // 90 deg cw
                    case 2: ny = img.height - 1 - y; nx = img.width - 1 - x; break;
                    default: ny = img.width - 1 - x; nx = y; break;            // 270 deg cw
                }
                out.at(c, ny, nx) = img.at(c, y, x);
            }
        }
    }
    return out;
}

Image reflect_pad_to_multiple(const Image& img, int multiple) {
    if (multiple < 1) {
        throw parameter_error("reflect_pad_to_multiple: multiple must be >= 1");
    }
    const int h = ((img.height + multiple - 1) / multiple) * multiple;
    const int w = ((img.width + multiple - 1) / multiple) * multiple;
    if (h == img.height && w == img.width) {
        return img;
    }
    Image out(img.channels, h, w);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            const int sy = reflect_index(y, img.height);
            for (int x = 0; x < w; ++x) {
                out.at(c, y, x) = img.at(c, sy, reflect_index(x, img.width));
            }
        }
    }
    return out;
}

} // namespace epan
