#pragma once

#include "posekit/geometry.hpp"
#include "posekit/image.hpp"
#include "posekit/keypoints.hpp"
#include "posekit/pnp.hpp"
#include "posekit/refine.hpp"
#include "posekit/reid.hpp"
#include "posekit/sync.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace posekit {

struct frame {
    image picture;
    keypoint_set keypoints;
};

struct pipeline_config {
    reid_config reid;
    refine_config refine;
    ransac_config ransac;
    sync_config sync;
};

// Keypoints visible in both a leader person and its associated person in the other view,
// ordered by (leader person, slot). correspondence.person is the leader person index.
std::vector<correspondence> mutual_correspondences(const keypoint_set& leader, const keypoint_set& other,
                                                   const std::vector<association>& associations);

struct triangulated_keypoints {
    std::vector<Eigen::Vector3d> points;   // leader-left frame
    std::vector<Eigen::Vector2d> follower; // refined follower pixels
    std::vector<int> person;               // leader person index
    std::vector<int> slot;
};

// Joins stereo and follower refinements on (leader person, slot), keeping points refined cleanly
// in both, and triangulates them with the rig. Points with parallel rays or behind the rig are
// skipped. Throws geometry_degenerate when fewer than 4 remain.
triangulated_keypoints join_and_triangulate(const stereo_rig& rig, const std::vector<refined_correspondence>& stereo,
                                            const std::vector<refined_correspondence>& follower);

struct pipeline_result {
    std::vector<association> follower_associations;
    std::vector<association> stereo_associations;
    std::vector<refined_correspondence> follower_refined;
    std::vector<refined_correspondence> stereo_refined;
    triangulated_keypoints triangulated;
    pnp_solution solution;
    nlohmann::json timings;  // seconds per stage
};

// sync -> reid -> mutual keypoints -> refinement -> stereo triangulation -> PnP. Failures are
// rethrown as stage_error naming the stage.
pipeline_result run_pipeline(const frame& leader_left, const frame& leader_right, const frame& follower,
                             const stereo_rig& rig, const camera_model& follower_camera,
                             const pipeline_config& cfg = {});

// Pose JSON; adds timings and a generation time unless deterministic.
nlohmann::json pose_report(const pipeline_result& result, bool deterministic);

// Point lists as arrays of coordinate arrays. The readers also accept {"points": [...]}.
nlohmann::json points_to_json(std::span<const Eigen::Vector3d> points);
nlohmann::json points_to_json(std::span<const Eigen::Vector2d> points);
std::vector<Eigen::Vector3d> points3d_from_json(const nlohmann::json& doc);
std::vector<Eigen::Vector2d> points2d_from_json(const nlohmann::json& doc);

// points3d.json, points2d.json and points.ply of a triangulation.
void write_triangulation(const triangulated_keypoints& tri, const std::string& directory);

// associations.json, stereo_associations.json, refined.json, stereo_refined.json, the
// triangulation files and pose.json under directory.
void write_pipeline_outputs(const pipeline_result& result, const std::string& directory, bool deterministic);

}  // namespace posekit
