#pragma once

#include <nlohmann/json.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <vector>

namespace posekit {

// Distortion-free pinhole camera.
struct camera_model {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    Eigen::Matrix3d K() const;
    Eigen::Matrix3d K_inv() const;
    // (x - cx) / fx, (y - cy) / fy
    Eigen::Vector2d normalize(const Eigen::Vector2d& pixel) const;
    Eigen::Vector2d denormalize(const Eigen::Vector2d& xy) const;
    // fx, fy > 0 and the principal point inside the image
    bool valid() const;
};

// x_target = rotation * x_source + translation.
struct rigid_transform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static rigid_transform identity() { return {}; }
    static rigid_transform from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);

    Eigen::Vector3d operator()(const Eigen::Vector3d& x) const { return rotation * x + translation; }

    // (a * b)(x) = a(b(x))
    rigid_transform operator*(const rigid_transform& other) const;
    rigid_transform inverse() const;

    Eigen::Quaterniond quaternion() const;  // unit, w >= 0

    // Orthonormal with det +1, both within 1e-9.
    bool valid(double tol = 1e-9) const;
};

struct stereo_rig {
    camera_model left;
    camera_model right;
    rigid_transform right_from_left;

    double baseline() const { return right_from_left.translation.norm(); }
};

// One calibrated view: camera_from_world pose plus intrinsics.
struct view {
    camera_model camera;
    rigid_transform pose;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

// Rotation vector -> matrix (Rodrigues).
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w);

// Geodesic angle between two rotations, radians.
double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// Closest rotation in the Frobenius sense.
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m);

// Pixel of X after applying pose. Throws behind_camera when the transformed depth is <= 0.
Eigen::Vector2d project(const camera_model& cam, const rigid_transform& pose, const Eigen::Vector3d& X);

// Unit viewing ray through a pixel, in the camera frame.
Eigen::Vector3d unproject(const camera_model& cam, const Eigen::Vector2d& pixel);

// Midpoint of the common perpendicular of the two viewing rays, in the left-camera frame.
// Throws degenerate_rays_error when the rays are parallel within 1e-9 rad.
Eigen::Vector3d triangulate_stereo(const stereo_rig& rig, const Eigen::Vector2d& p_left,
                                   const Eigen::Vector2d& p_right);

struct linear_triangulation {
    Eigen::Vector3d point;
    double residual;  // rms reprojection error over the views, px
};

// Homogeneous DLT over two or more views. Throws geometry_degenerate on a rank-deficient system
// or a point at infinity.
linear_triangulation triangulate_linear(std::span<const view> views, std::span<const Eigen::Vector2d> obs);

// l = F p, scaled so a^2 + b^2 = 1. Throws geometry_degenerate when F is not rank 2 or the line
// vanishes (p at the epipole).
Eigen::Vector3d epipolar_line(const Eigen::Matrix3d& F, const Eigen::Vector2d& p);

// |a x + b y + c| for a normalized line.
double point_line_distance(const Eigen::Vector3d& line, const Eigen::Vector2d& p);

nlohmann::json to_json(const camera_model& cam);
camera_model camera_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const stereo_rig& rig);
// {fx, fy, cx, cy, width, height, rotation: [w, x, y, z], translation: [x, y, z]}; an optional
// "right" object overrides the right camera's intrinsics.
stereo_rig rig_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const rigid_transform& t);
rigid_transform transform_from_json(const nlohmann::json& doc);

}  // namespace posekit
