#include "posekit/image.hpp"

#include "posekit/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace posekit {

image::image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 1 || height < 1 || (channels != 1 && channels != 3)) {
        throw error(error_code::shape, "image: invalid shape " + std::to_string(width) + "x" +
                                           std::to_string(height) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

bool contains(const image& img, double x, double y) {
    return x >= 0.0 && y >= 0.0 && x <= img.width() - 1 && y <= img.height() - 1;
}

bilinear_sample sample(const image& img, double x, double y, int c) {
    const int w = img.width();
    const int h = img.height();
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    x0 = std::clamp(x0, 0, std::max(w - 2, 0));
    y0 = std::clamp(y0, 0, std::max(h - 2, 0));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;

    const double v00 = img.at(x0, y0, c);
    const double v10 = img.at(x1, y0, c);
    const double v01 = img.at(x0, y1, c);
    const double v11 = img.at(x1, y1, c);

    const double top = v00 + fx * (v10 - v00);
    const double bottom = v01 + fx * (v11 - v01);
    bilinear_sample s;
    s.value = top + fy * (bottom - top);
    s.d_dx = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
    s.d_dy = bottom - top;
    return s;
}

double sample_value(const image& img, double x, double y, int c) {
    return sample(img, x, y, c).value;
}

patch crop(const image& img, int x0, int y0, int width, int height) {
    if (x0 < 0 || y0 < 0 || width < 1 || height < 1 || x0 + width > img.width() ||
        y0 + height > img.height()) {
        throw error(error_code::out_of_bounds, "crop: rectangle leaves the image");
    }
    patch out{image(width, height, img.channels()), Eigen::Vector2i(x0, y0)};
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                out.pixels.at(x, y, c) = img.at(x0 + x, y0 + y, c);
            }
        }
    }
    return out;
}

image resize_bilinear(const image& img, int width, int height) {
    image out(width, height, img.channels());
    const double sx = width > 1 ? double(img.width() - 1) / (width - 1) : 0.0;
    const double sy = height > 1 ? double(img.height() - 1) / (height - 1) : 0.0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = sample_value(img, x * sx, y * sy, c);
            }
        }
    }
    return out;
}

image to_gray(const image& img) {
    if (img.channels() == 1) {
        return img;
    }
    image out(img.width(), img.height(), 1);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
        }
    }
    return out;
}

image from_unit_range(const image& img) {
    image out = img;
    for (auto& v : out.data()) {
        v = std::clamp(v, 0.0, 1.0) * 255.0;
    }
    return out;
}

image quantize(const image& img) {
    image out = img;
    for (auto& v : out.data()) {
        v = std::clamp(std::round(v), 0.0, 255.0);
    }
    return out;
}

namespace {

struct file_closer {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using file_ptr = std::unique_ptr<std::FILE, file_closer>;

}  // namespace

image read_png(const std::string& path) {
    file_ptr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw error(error_code::io, "read_png: cannot open " + path);
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw error(error_code::parse, "read_png: malformed PNG " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    std::vector<png_byte> buffer(static_cast<std::size_t>(width) * height * channels);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = buffer.data() + static_cast<std::size_t>(y) * width * channels;
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    image out(width, height, channels == 1 ? 1 : 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < out.channels(); ++c) {
                out.at(x, y, c) = rows[y][x * channels + c];
            }
        }
    }
    return out;
}

void write_png(const std::string& path, const image& img) {
    file_ptr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw error(error_code::io, "write_png: cannot open " + path);
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw error(error_code::io, "write_png: encoder failure " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width(), img.height(), 8,
                 img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * img.channels());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                row[x * img.channels() + c] =
                    static_cast<png_byte>(std::clamp(std::lround(img.at(x, y, c)), 0L, 255L));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace posekit
