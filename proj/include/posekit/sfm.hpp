#pragma once

#include "posekit/geometry.hpp"
#include "posekit/pnp.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <vector>

namespace posekit {

struct point_match {
    Eigen::Vector2d left;   // pixel in the first view
    Eigen::Vector2d right;  // pixel in the second view
};

struct fundamental_estimate {
    Eigen::Matrix3d F;  // rank 2, unit Frobenius norm, right^T F left = 0
    std::vector<bool> inlier_mask;
};

// Hartley-normalized linear 8-point solve over all given matches, followed by rank-2 truncation.
// Throws geometry_degenerate when the design matrix has a null space of dimension > 1
// (for example a planar scene seen under pure rotation).
Eigen::Matrix3d eight_point(std::span<const point_match> matches);

// First-order geometric error of a match under F, in px^2.
double sampson_distance(const Eigen::Matrix3d& F, const point_match& m);

// RANSAC over eight_point; a match is an inlier when sqrt(sampson) <= cfg.inlier_threshold.
// Throws precondition for fewer than 8 matches, geometry_degenerate on a degenerate match set and
// no_consensus_error when fewer than max(8, cfg.min_inliers) inliers are found.
fundamental_estimate estimate_fundamental(std::span<const point_match> matches, const ransac_config& cfg = {});

// K_right^T F K_left with its two nonzero singular values replaced by their mean.
Eigen::Matrix3d essential_from_fundamental(const Eigen::Matrix3d& F, const camera_model& left,
                                           const camera_model& right);

// The decomposition of E that places the most matches in front of both cameras; the translation
// has unit norm. Throws geometry_degenerate for E = 0, behind_camera when no decomposition puts a
// match in front, ambiguity when the runner-up reaches 90% of the winner's count.
rigid_transform recover_pose(const Eigen::Matrix3d& E, std::span<const point_match> matches,
                             const camera_model& left, const camera_model& right);

struct two_view_reconstruction {
    Eigen::Matrix3d F;
    Eigen::Matrix3d E;
    rigid_transform pose;                // right_from_left, unit-norm translation
    std::vector<bool> inlier_mask;       // per input match
    std::vector<Eigen::Vector3d> points; // one per inlier, in the left-camera frame
    double rms_before = 0.0;             // px, after linear triangulation
    double rms_after = 0.0;              // px, after joint refinement
};

// fundamental -> essential -> pose -> linear triangulation -> joint refinement of pose and points.
// Errors from each step are rethrown as stage_error labeled with the step.
two_view_reconstruction reconstruct_two_view(std::span<const point_match> matches, const camera_model& left,
                                             const camera_model& right, const ransac_config& cfg = {});

// Root-mean-square reprojection error of points (left frame) over both views.
double two_view_rms(const rigid_transform& pose, std::span<const Eigen::Vector3d> points,
                    std::span<const point_match> matches, const camera_model& left, const camera_model& right);

// ASCII PLY with one "x y z" vertex per line.
void write_ply(std::ostream& out, std::span<const Eigen::Vector3d> points);
std::vector<Eigen::Vector3d> read_ply(std::istream& in);

}  // namespace posekit
