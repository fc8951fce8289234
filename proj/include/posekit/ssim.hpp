#pragma once

#include "posekit/image.hpp"

#include <Eigen/Core>

namespace posekit {

struct ssim_config {
    double k1 = 0.01;
    double k2 = 0.03;
    int window = 8;
    double dynamic_range = 255.0;

    double c1() const { return (dynamic_range * k1) * (dynamic_range * k1); }
    double c2() const { return (dynamic_range * k2) * (dynamic_range * k2); }
};

struct ssim_stats {
    double mu_x = 0.0;
    double mu_y = 0.0;
    double var_x = 0.0;
    double var_y = 0.0;
    double cov_xy = 0.0;
};

// Population statistics of one channel over the whole extent of two equally sized patches.
ssim_stats patch_stats(const image& x, const image& y, int channel);

// Luminance term times the joint contrast-structure term, both stabilized by c1 and c2.
double ssim_from_stats(const ssim_stats& s, const ssim_config& cfg);

// Single evaluation over the whole patch, averaged over channels.
double ssim_window(const image& x, const image& y, const ssim_config& cfg = {});

// Mean of the window-by-window scores over every fully contained, stride-1 window position,
// averaged over channels.
double ssim_map(const image& x, const image& y, const ssim_config& cfg = {});

struct ssim_value_grad {
    double value;
    Eigen::Vector2d grad;
};

// ssim_map(ref, P(center)) and its derivative with respect to center, where P(center) is the
// ref-sized patch of img centered at center (sample offsets i - (W-1)/2), read bilinearly.
// Throws out_of_bounds if the patch exits img.
ssim_value_grad ssim_map_with_grad(const image& ref, const image& img, const Eigen::Vector2d& center,
                                   const ssim_config& cfg = {});

Eigen::Vector2d ssim_grad(const image& ref, const image& img, const Eigen::Vector2d& center,
                          const ssim_config& cfg = {});

// True if a width x height patch centered at center lies inside img.
bool patch_fits(const image& img, const Eigen::Vector2d& center, int width, int height);

image patch_at(const image& img, const Eigen::Vector2d& center, int width, int height);

}  // namespace posekit
