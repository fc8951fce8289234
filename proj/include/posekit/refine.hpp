#pragma once

#include "posekit/image.hpp"
#include "posekit/ssim.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <string_view>
#include <vector>

namespace posekit {

struct correspondence {
    Eigen::Vector2d p_l = Eigen::Vector2d::Zero();  // leader pixel, never moved
    Eigen::Vector2d p_f = Eigen::Vector2d::Zero();  // follower pixel, refined
    int person = -1;
    int slot = -1;
};

struct refine_config {
    int patch = 32;        // side of the compared patches
    double region = 32.0;  // refined point stays within this L-inf distance of its start
    double eta = 0.003;
    int max_iter = 100;
    // eta scales the gradient of the loss accumulated over the 32 x 32 x 3 patch samples and
    // expressed in patch-normalized coordinates; in pixel units this is a factor of 3072.
    double gradient_gain = 3072.0;
    double step_tolerance = 1e-4;  // px
    ssim_config ssim;
};

enum class refine_flag { ok, leader_out_of_bounds, follower_out_of_bounds, infeasible };

std::string_view to_string(refine_flag flag);

struct refined_correspondence {
    correspondence c;  // c.p_f is the refined location
    Eigen::Vector2d p_f0 = Eigen::Vector2d::Zero();
    double loss0 = 0.0;
    double loss = 0.0;
    int iters = 0;
    refine_flag flag = refine_flag::ok;
};

// 1 - ssim_map between the patches centered at p_l and p_f. Throws out_of_bounds.
double refine_loss(const image& img_l, const image& img_f, const correspondence& c,
                   const refine_config& cfg = {});

// Projected gradient descent on refine_loss over p_f, keeping the best iterate. Points whose
// patches do not fit are returned unchanged with a flag instead of an exception.
refined_correspondence refine_one(const image& img_l, const image& img_f, const correspondence& c,
                                  const refine_config& cfg = {});

// Elementwise refine_one; items are independent and may be processed concurrently.
std::vector<refined_correspondence> refine_all(const image& img_l, const image& img_f,
                                               const std::vector<correspondence>& cs,
                                               const refine_config& cfg = {});

nlohmann::json to_json(const std::vector<refined_correspondence>& refined);
std::vector<refined_correspondence> refined_from_json(const nlohmann::json& doc);

}  // namespace posekit
