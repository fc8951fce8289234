#pragma once

#include "posekit/geometry.hpp"
#include "posekit/image.hpp"
#include "posekit/keypoints.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace posekit {

// Synthetic scenes: people are flat textured billboards standing on a floor, with their
// keypoints painted onto the billboard. The world frame is the first camera's frame
// (x right, y down, z forward).

struct scene_camera {
    std::string name;
    camera_model camera;
    rigid_transform pose;  // camera_from_world
    double timestamp = 0.0;
};

struct scene_spec {
    int persons = 2;
    double skeleton_scale = 1.7;  // standing height, m
    double camera_height = 0.9;   // first camera above the floor, m
    double camera_pitch = 0.0;    // first camera's downward tilt, rad
    std::vector<scene_camera> cameras;
    double noise_sigma = 0.0;       // px, Gaussian, added to keypoint docs
    double outlier_fraction = 0.0;  // keypoints replaced by uniform random pixels
    double dropout = 0.0;           // keypoints reported missing
    std::uint64_t seed = 0;
};

struct person_instance {
    int id = 0;
    Eigen::Vector3d origin;   // bottom center of the billboard, slightly below the floor
    Eigen::Vector3d u_axis;   // lateral, in the billboard plane
    Eigen::Vector3d v_axis;   // up
    double half_width = 0.0;  // m
    double height = 0.0;      // m
    std::array<Eigen::Vector2d, keypoint_count> joints_plane;  // (u, v) in m
    image texture;            // RGB, u to the right, v up
    double texel = 0.0;       // m per texel

    Eigen::Vector3d normal() const { return u_axis.cross(v_axis); }
    Eigen::Vector3d joint(int slot) const;
    Eigen::Vector3d at(double u, double v) const { return origin + u * u_axis + v * v_axis; }
};

struct scene_view {
    scene_camera camera;
    image picture;
    keypoint_set keypoints;        // as a detector would report them, left-most person first
    std::vector<int> person_ids;   // keypoints.persons[k] shows person_ids[k]
    std::vector<skeleton> exact;   // noise-free projections of the visible joints, same order
};

struct scene {
    scene_spec spec;
    std::vector<person_instance> persons;
    std::vector<scene_view> views;

    const scene_view& view_named(const std::string& name) const;
};

// Deterministic in spec.seed. Throws precondition for persons < 1, negative noise or an empty
// camera list.
scene generate_scene(const scene_spec& spec);

inline constexpr double synthetic_focal = 600.0;
inline constexpr int synthetic_width = 640;
inline constexpr int synthetic_height = 480;

camera_model synthetic_camera();

// Camera at center looking with the given yaw (radians, positive turns toward +x) and downward
// pitch, both relative to a level frame (x right, y down, z forward horizontal).
rigid_transform camera_looking(const Eigen::Vector3d& center, double yaw, double pitch = 0.0);

// Level frame of a first camera tilted down by pitch, expressed in that camera's frame.
rigid_transform world_from_level(double pitch);

// leader_left at the origin, leader_right 0.2 m to its right, and a follower 0.8-1.2 m aside,
// turned toward the people. The follower's placement is drawn from seed.
scene_spec stereo_scene_spec(int persons, std::uint64_t seed);

// Two elevated views of nine people in staggered rows, the second 0.8 m to the right and turned
// toward the group.
scene_spec two_view_scene_spec(std::uint64_t seed);

inline constexpr double leader_baseline = 0.2;

// Rig for views leader_left / leader_right of a stereo scene.
stereo_rig scene_rig(const scene& s);

// World joints, camera poses and the doc-to-person mapping of every view.
nlohmann::json ground_truth_json(const scene& s);

// Writes <name>.png, <name>.json (keypoints) and calib_<name>.json per view, rig.json when the
// scene has a leader stereo pair, and ground_truth.json.
void write_scene(const scene& s, const std::string& directory);

}  // namespace posekit
