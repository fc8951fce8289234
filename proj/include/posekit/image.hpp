#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace posekit {

// Interleaved H x W x C intensities in [0, 255]. Pixel centers sit on integer coordinates.
class image {
public:
    image() = default;
    image(int width, int height, int channels, double fill = 0.0);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    bool empty() const noexcept { return data_.empty(); }

    double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const image& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    bool operator==(const image& other) const = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

// Pixel block cut out of a larger image; origin is the source coordinate of pixels(0, 0).
struct patch {
    image pixels;
    Eigen::Vector2i origin = Eigen::Vector2i::Zero();
};

struct bilinear_sample {
    double value;
    double d_dx;
    double d_dy;
};

// True when (x, y) can be sampled bilinearly, i.e. lies in [0, W-1] x [0, H-1].
bool contains(const image& img, double x, double y);

// Bilinear sample with its spatial derivative. The derivative is that of the cell
// [floor(x), floor(x)+1] (the right-hand cell at integer coordinates, the last cell at the border).
bilinear_sample sample(const image& img, double x, double y, int c);

double sample_value(const image& img, double x, double y, int c);

// Integer crop. Throws out_of_bounds if the rectangle leaves the image.
patch crop(const image& img, int x0, int y0, int width, int height);

// Bilinear resize that maps pixel centers of the corner pixels onto each other.
image resize_bilinear(const image& img, int width, int height);

image to_gray(const image& img);

// Maps floating-point data in [0, 1] into the 8-bit range.
image from_unit_range(const image& img);

// Rounds and clamps each value to an 8-bit level.
image quantize(const image& img);

// 8-bit PNG (gray or RGB). Alpha channels are dropped on read.
image read_png(const std::string& path);
void write_png(const std::string& path, const image& img);

}  // namespace posekit
