#include "posekit/geometry.hpp"

#include "posekit/error.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace posekit {

Eigen::Matrix3d camera_model::K() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
}

Eigen::Matrix3d camera_model::K_inv() const {
    Eigen::Matrix3d k;
    k << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
    return k;
}

Eigen::Vector2d camera_model::normalize(const Eigen::Vector2d& pixel) const {
    return {(pixel.x() - cx) / fx, (pixel.y() - cy) / fy};
}

Eigen::Vector2d camera_model::denormalize(const Eigen::Vector2d& xy) const {
    return {fx * xy.x() + cx, fy * xy.y() + cy};
}

bool camera_model::valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cy >= 0.0 && cx <= width &&
           cy <= height;
}

rigid_transform rigid_transform::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
    return {q.normalized().toRotationMatrix(), t};
}

rigid_transform rigid_transform::operator*(const rigid_transform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
}

rigid_transform rigid_transform::inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -rt * translation};
}

Eigen::Quaterniond rigid_transform::quaternion() const {
    Eigen::Quaterniond q(rotation);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return q;
}

bool rigid_transform::valid(double tol) const {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho < tol && std::abs(rotation.determinant() - 1.0) < tol && translation.allFinite();
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d s;
    s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return s;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
    const double theta = w.norm();
    if (theta < 1e-12) {
        return Eigen::Matrix3d::Identity() + skew(w);
    }
    return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    return Eigen::AngleAxisd(a.transpose() * b).angle();
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

Eigen::Vector2d project(const camera_model& cam, const rigid_transform& pose, const Eigen::Vector3d& X) {
    const Eigen::Vector3d xc = pose(X);
    if (!(xc.z() > 0.0)) {
        throw error(error_code::behind_camera, "project: point is behind the camera");
    }
    return cam.denormalize(xc.head<2>() / xc.z());
}

Eigen::Vector3d unproject(const camera_model& cam, const Eigen::Vector2d& pixel) {
    return cam.normalize(pixel).homogeneous().normalized();
}

Eigen::Vector3d triangulate_stereo(const stereo_rig& rig, const Eigen::Vector2d& p_left,
                                   const Eigen::Vector2d& p_right) {
    const Eigen::Matrix3d rt = rig.right_from_left.rotation.transpose();
    const Eigen::Vector3d o1 = Eigen::Vector3d::Zero();
    const Eigen::Vector3d d1 = unproject(rig.left, p_left);
    const Eigen::Vector3d o2 = -rt * rig.right_from_left.translation;
    const Eigen::Vector3d d2 = rt * unproject(rig.right, p_right);

    const double angle = std::atan2(d1.cross(d2).norm(), d1.dot(d2));
    if (angle < 1e-9) {
        throw degenerate_rays_error(angle, "triangulate_stereo: rays are parallel (angle " +
                                               std::to_string(angle) + " rad)");
    }
    const Eigen::Vector3d w0 = o1 - o2;
    const double b = d1.dot(d2);
    const double d = d1.dot(w0);
    const double e = d2.dot(w0);
    const double denom = 1.0 - b * b;
    const double s = (b * e - d) / denom;
    const double u = (e - b * d) / denom;
    return 0.5 * ((o1 + s * d1) + (o2 + u * d2));
}

linear_triangulation triangulate_linear(std::span<const view> views, std::span<const Eigen::Vector2d> obs) {
    if (views.size() < 2 || views.size() != obs.size()) {
        throw error(error_code::precondition, "triangulate_linear: need one observation per view, >= 2 views");
    }
    Eigen::MatrixXd A(2 * views.size(), 4);
    for (std::size_t i = 0; i < views.size(); ++i) {
        Eigen::Matrix<double, 3, 4> P;
        P << views[i].pose.rotation, views[i].pose.translation;
        const Eigen::Vector2d x = views[i].camera.normalize(obs[i]);
        A.row(2 * i) = x.x() * P.row(2) - P.row(0);
        A.row(2 * i + 1) = x.y() * P.row(2) - P.row(1);
    }
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
        const double n = A.row(r).norm();
        if (n > 0.0) A.row(r) /= n;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv.size() < 4 || sv(2) < 1e-12 * sv(0)) {
        throw error(error_code::geometry_degenerate, "triangulate_linear: rank-deficient system");
    }
    const Eigen::Vector4d h = svd.matrixV().col(3);
    if (std::abs(h(3)) < 1e-12 * h.norm()) {
        throw error(error_code::geometry_degenerate, "triangulate_linear: point at infinity");
    }
    linear_triangulation out;
    out.point = h.head<3>() / h(3);
    double sq = 0.0;
    for (std::size_t i = 0; i < views.size(); ++i) {
        const Eigen::Vector3d xc = views[i].pose(out.point);
        const Eigen::Vector2d px = views[i].camera.denormalize(xc.head<2>() / xc.z());
        sq += (px - obs[i]).squaredNorm();
    }
    out.residual = std::sqrt(sq / double(views.size()));
    return out;
}

Eigen::Vector3d epipolar_line(const Eigen::Matrix3d& F, const Eigen::Vector2d& p) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(F);
    const auto& sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(2) > 1e-6 * sv(0) || sv(1) < 1e-9 * sv(0)) {
        throw error(error_code::geometry_degenerate, "epipolar_line: F is not rank 2");
    }
    const Eigen::Vector3d ph = p.homogeneous();
    Eigen::Vector3d l = F * ph;
    const double n = l.head<2>().norm();
    if (n <= 1e-10 * sv(0) * ph.norm()) {
        throw error(error_code::geometry_degenerate, "epipolar_line: point lies at the epipole");
    }
    return l / n;
}

double point_line_distance(const Eigen::Vector3d& line, const Eigen::Vector2d& p) {
    return std::abs(line.dot(p.homogeneous()));
}

nlohmann::json to_json(const camera_model& cam) {
    return {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
}

camera_model camera_from_json(const nlohmann::json& doc) {
    camera_model cam;
    try {
        cam.fx = doc.at("fx").get<double>();
        cam.fy = doc.at("fy").get<double>();
        cam.cx = doc.at("cx").get<double>();
        cam.cy = doc.at("cy").get<double>();
        cam.width = doc.at("width").get<int>();
        cam.height = doc.at("height").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw error(error_code::parse, std::string("calibration: ") + e.what());
    }
    if (!cam.valid()) {
        throw error(error_code::parse, "calibration: focal lengths must be positive and the principal point inside the image");
    }
    return cam;
}

nlohmann::json to_json(const rigid_transform& t) {
    const auto q = t.quaternion();
    return {{"rotation", {q.w(), q.x(), q.y(), q.z()}},
            {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

rigid_transform transform_from_json(const nlohmann::json& doc) {
    try {
        const auto& r = doc.at("rotation");
        const auto& t = doc.at("translation");
        if (r.size() != 4 || t.size() != 3) {
            throw error(error_code::parse, "transform: rotation needs 4 and translation 3 entries");
        }
        const Eigen::Quaterniond q(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>());
        if (q.norm() < 1e-12) throw error(error_code::parse, "transform: zero quaternion");
        return rigid_transform::from_quaternion(
            q, Eigen::Vector3d(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
    } catch (const nlohmann::json::exception& e) {
        throw error(error_code::parse, std::string("transform: ") + e.what());
    }
}

nlohmann::json to_json(const stereo_rig& rig) {
    nlohmann::json doc = to_json(rig.left);
    const auto t = to_json(rig.right_from_left);
    doc["rotation"] = t["rotation"];
    doc["translation"] = t["translation"];
    if (to_json(rig.right) != to_json(rig.left)) {
        doc["right"] = to_json(rig.right);
    }
    return doc;
}

stereo_rig rig_from_json(const nlohmann::json& doc) {
    stereo_rig rig;
    rig.left = camera_from_json(doc);
    rig.right = doc.contains("right") ? camera_from_json(doc["right"]) : rig.left;
    rig.right_from_left = transform_from_json(doc);
    if (!(rig.baseline() > 0.0)) {
        throw error(error_code::parse, "stereo rig: baseline must be positive");
    }
    return rig;
}

}  // namespace posekit
