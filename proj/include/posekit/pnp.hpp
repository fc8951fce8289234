#pragma once

#include "posekit/geometry.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace posekit {

struct pnp_problem {
    std::vector<Eigen::Vector3d> points3d;  // leader frame
    std::vector<Eigen::Vector2d> points2d;  // follower pixels
    camera_model camera;                    // follower intrinsics
};

struct ransac_config {
    double inlier_threshold = 2.0;  // px
    int max_iters = 1000;
    double confidence = 0.999;
    int min_inliers = 4;
    std::uint64_t rng_seed = 0;
};

struct pnp_solution {
    rigid_transform pose;  // follower_from_leader
    std::vector<bool> inlier_mask;
    double rms_reproj = 0.0;  // px, over the inliers

    std::size_t inlier_count() const;
};

// Four correspondences: P3P on three of them, the fourth selecting among the candidates. Five or
// more: EPnP. Returns at most one pose, and none for degenerate (collinear, or coplanar with five
// or more) points or when the pose puts a point at non-positive depth.
std::vector<rigid_transform> solve_pnp_minimal(std::span<const Eigen::Vector3d> points3d,
                                               std::span<const Eigen::Vector2d> points2d,
                                               const camera_model& camera);

// Throws precondition on malformed problems, no_consensus_error when no hypothesis reaches
// cfg.min_inliers. Deterministic for a fixed rng_seed.
pnp_solution solve_pnp_ransac(const pnp_problem& prob, const ransac_config& cfg = {});

// Levenberg-Marquardt on the reprojection error of the masked points. Steps that do not lower
// the cost are rejected, so the result is never worse than the start.
rigid_transform refine_pose(const rigid_transform& start, const pnp_problem& prob, const std::vector<bool>& mask,
                            int max_iters = 20, double step_tolerance = 1e-8);

// Root-mean-square pixel residual over the masked correspondences.
double reprojection_rms(const rigid_transform& pose, const pnp_problem& prob, const std::vector<bool>& mask);

// {quaternion: [w, x, y, z], translation: [x, y, z], rms, inliers: [indices]}
nlohmann::json to_json(const pnp_solution& sol);

}  // namespace posekit
