#pragma once

#include "posekit/image.hpp"
#include "posekit/keypoints.hpp"
#include "posekit/ssim.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <vector>

namespace posekit {

struct reid_config {
    double delta_min = 0.4;
    double min_area = 600.0;
    // Whole-crop SSIM by default; windowed mean when set (crops smaller than the window fall
    // back to the whole-crop score).
    bool windowed = false;
    ssim_config ssim;
};

struct association {
    int follower_index = -1;
    int leader_index = -1;
    double score = 0.0;
    std::vector<body_part> parts_used;
};

struct pair_score {
    double score;  // -inf when the two persons share no body-part box
    std::vector<body_part> parts;
};

// Leader crop resized (bilinear) to the follower crop's size, then channel-averaged SSIM.
// Throws precondition if a box is below min_area or leaves its image.
double part_similarity(const image& img_l, const box& box_l, const image& img_f, const box& box_f,
                       const reid_config& cfg = {});

// scores[f][l] over the parts present in both persons.
std::vector<std::vector<pair_score>> score_matrix(const image& leader_img, const keypoint_set& leader,
                                                  const image& follower_img,
                                                  const keypoint_set& follower,
                                                  const reid_config& cfg = {});

// Greedy one-to-one assignment by descending score; a leader may serve two followers only
// when their scores tie within 1e-9. Pairs below delta_min are never emitted.
std::vector<association> assign(const std::vector<std::vector<pair_score>>& scores,
                                 const reid_config& cfg = {});

std::vector<association> associate(const image& leader_img, const keypoint_set& leader,
                                   const image& follower_img, const keypoint_set& follower,
                                   const reid_config& cfg = {});

nlohmann::json to_json(const std::vector<association>& associations);
std::vector<association> associations_from_json(const nlohmann::json& doc);

struct labeled_score {
    double score;
    bool same;
};

struct roc_point {
    double threshold;
    double tpr;
    double fpr;
};

// A pair is predicted "same" when score >= threshold. Requires at least one positive and one
// negative sample.
std::vector<roc_point> roc_sweep(std::span<const labeled_score> corpus, std::span<const double> thresholds);

// Probability that a random positive outscores a random negative (ties count one half).
double roc_auc(std::span<const labeled_score> corpus);

}  // namespace posekit
