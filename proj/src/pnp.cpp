#include "posekit/pnp.hpp"

#include "posekit/error.hpp"
#include "posekit/parallel.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <complex>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace posekit {

namespace {

using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat6x10 = Eigen::Matrix<double, 6, 10>;

constexpr int pair_a[6] = {0, 0, 0, 1, 1, 2};
constexpr int pair_b[6] = {1, 2, 3, 2, 3, 3};

// Products of betas in the column order of the distance system.
Eigen::Matrix<double, 10, 1> beta_products(const Eigen::Vector4d& b) {
    Eigen::Matrix<double, 10, 1> p;
    p << b(0) * b(0), b(0) * b(1), b(1) * b(1), b(0) * b(2), b(1) * b(2), b(2) * b(2), b(0) * b(3), b(1) * b(3),
        b(2) * b(3), b(3) * b(3);
    return p;
}

class epnp {
public:
    epnp(std::span<const Eigen::Vector3d> world, std::span<const Eigen::Vector2d> normalized)
        : world_(world), image_(normalized) {}

    std::optional<rigid_transform> solve() {
        if (!choose_control_points()) return std::nullopt;
        compute_alphas();

        const std::size_t n = world_.size();
        Eigen::MatrixXd M(2 * n, 12);
        for (std::size_t i = 0; i < n; ++i) {
            for (int j = 0; j < 4; ++j) {
                const double a = alphas_(i, j);
                M.block<1, 3>(2 * i, 3 * j) << a, 0.0, -a * image_[i].x();
                M.block<1, 3>(2 * i + 1, 3 * j) << 0.0, a, -a * image_[i].y();
            }
        }
        const Eigen::Matrix<double, 12, 12> mtm = M.transpose() * M;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(mtm);
        for (int k = 0; k < 4; ++k) kernel_[k] = eig.eigenvectors().col(k);

        Mat6x10 L;
        Eigen::Matrix<double, 6, 1> rho;
        for (int r = 0; r < 6; ++r) {
            std::array<Eigen::Vector3d, 4> dv;
            for (int k = 0; k < 4; ++k) {
                dv[k] = kernel_[k].segment<3>(3 * pair_a[r]) - kernel_[k].segment<3>(3 * pair_b[r]);
            }
            L.row(r) << dv[0].dot(dv[0]), 2 * dv[0].dot(dv[1]), dv[1].dot(dv[1]), 2 * dv[0].dot(dv[2]),
                2 * dv[1].dot(dv[2]), dv[2].dot(dv[2]), 2 * dv[0].dot(dv[3]), 2 * dv[1].dot(dv[3]),
                2 * dv[2].dot(dv[3]), dv[3].dot(dv[3]);
            rho(r) = (control_[pair_a[r]] - control_[pair_b[r]]).squaredNorm();
        }

        std::optional<rigid_transform> best;
        double best_err = std::numeric_limits<double>::infinity();
        for (const auto& start : {approx_1(L, rho), approx_2(L, rho), approx_3(L, rho)}) {
            const Eigen::Vector4d betas = gauss_newton(L, rho, start);
            const auto pose = pose_from_betas(betas);
            const double err = mean_error(pose);
            if (err < best_err) {
                best_err = err;
                best = pose;
            }
        }
        return best;
    }

private:
    bool choose_control_points() {
        const std::size_t n = world_.size();
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        for (const auto& p : world_) centroid += p;
        centroid /= double(n);
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const auto& p : world_) cov += (p - centroid) * (p - centroid).transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        const Eigen::Vector3d lambda = eig.eigenvalues();  // ascending
        if (!(lambda(2) > 0.0) || lambda(0) < 1e-10 * lambda(2)) return false;

        control_[0] = centroid;
        for (int k = 0; k < 3; ++k) {
            control_[k + 1] = centroid + std::sqrt(lambda(2 - k) / double(n)) * eig.eigenvectors().col(2 - k);
        }
        return true;
    }

    void compute_alphas() {
        Eigen::Matrix4d C;
        for (int j = 0; j < 4; ++j) C.col(j) << control_[j], 1.0;
        const Eigen::Matrix4d C_inv = C.inverse();
        alphas_.resize(world_.size(), 4);
        for (std::size_t i = 0; i < world_.size(); ++i) {
            alphas_.row(i) = (C_inv * world_[i].homogeneous()).transpose();
        }
    }

    static Eigen::Vector4d approx_1(const Mat6x10& L, const Eigen::Matrix<double, 6, 1>& rho) {
        Eigen::Matrix<double, 6, 4> A;
        A << L.col(0), L.col(1), L.col(3), L.col(6);
        const Eigen::Vector4d b = A.colPivHouseholderQr().solve(rho);
        Eigen::Vector4d betas;
        if (b(0) < 0) {
            betas(0) = std::sqrt(-b(0));
            betas.tail<3>() = -b.tail<3>() / betas(0);
        } else {
            betas(0) = std::sqrt(b(0));
            betas.tail<3>() = b.tail<3>() / betas(0);
        }
        return betas;
    }

    static Eigen::Vector4d approx_2(const Mat6x10& L, const Eigen::Matrix<double, 6, 1>& rho) {
        Eigen::Matrix<double, 6, 3> A;
        A << L.col(0), L.col(1), L.col(2);
        const Eigen::Vector3d b = A.colPivHouseholderQr().solve(rho);
        Eigen::Vector4d betas = Eigen::Vector4d::Zero();
        if (b(0) < 0) {
            betas(0) = std::sqrt(-b(0));
            betas(1) = b(2) < 0 ? std::sqrt(-b(2)) : 0.0;
        } else {
            betas(0) = std::sqrt(b(0));
            betas(1) = b(2) > 0 ? std::sqrt(b(2)) : 0.0;
        }
        if (b(1) < 0) betas(0) = -betas(0);
        return betas;
    }

    static Eigen::Vector4d approx_3(const Mat6x10& L, const Eigen::Matrix<double, 6, 1>& rho) {
        Eigen::Matrix<double, 6, 5> A;
        A << L.col(0), L.col(1), L.col(2), L.col(3), L.col(4);
        const Eigen::Matrix<double, 5, 1> b = A.colPivHouseholderQr().solve(rho);
        Eigen::Vector4d betas = Eigen::Vector4d::Zero();
        if (b(0) < 0) {
            betas(0) = std::sqrt(-b(0));
            betas(1) = b(2) < 0 ? std::sqrt(-b(2)) : 0.0;
        } else {
            betas(0) = std::sqrt(b(0));
            betas(1) = b(2) > 0 ? std::sqrt(b(2)) : 0.0;
        }
        if (b(1) < 0) betas(0) = -betas(0);
        betas(2) = betas(0) != 0.0 ? b(3) / betas(0) : 0.0;
        return betas;
    }

    static Eigen::Vector4d gauss_newton(const Mat6x10& L, const Eigen::Matrix<double, 6, 1>& rho,
                                        Eigen::Vector4d betas) {
        for (int it = 0; it < 10; ++it) {
            const auto& b = betas;
            Eigen::Matrix<double, 6, 4> J;
            for (int r = 0; r < 6; ++r) {
                const auto l = L.row(r);
                J(r, 0) = 2 * l(0) * b(0) + l(1) * b(1) + l(3) * b(2) + l(6) * b(3);
                J(r, 1) = l(1) * b(0) + 2 * l(2) * b(1) + l(4) * b(2) + l(7) * b(3);
                J(r, 2) = l(3) * b(0) + l(4) * b(1) + 2 * l(5) * b(2) + l(8) * b(3);
                J(r, 3) = l(6) * b(0) + l(7) * b(1) + l(8) * b(2) + 2 * l(9) * b(3);
            }
            const Eigen::Matrix<double, 6, 1> residual = rho - L * beta_products(b);
            const Eigen::Vector4d step = J.colPivHouseholderQr().solve(residual);
            if (!step.allFinite()) break;
            betas += step;
            if (step.norm() < 1e-14 * (1.0 + betas.norm())) break;
        }
        return betas;
    }

    rigid_transform pose_from_betas(const Eigen::Vector4d& betas) const {
        Vec12 x = Vec12::Zero();
        for (int k = 0; k < 4; ++k) x += betas(k) * kernel_[k];
        std::vector<Eigen::Vector3d> cam(world_.size());
        for (std::size_t i = 0; i < world_.size(); ++i) {
            cam[i].setZero();
            for (int j = 0; j < 4; ++j) cam[i] += alphas_(i, j) * x.segment<3>(3 * j);
        }
        if (cam[0].z() < 0.0) {
            for (auto& p : cam) p = -p;
        }
        // Procrustes: camera = R world + t
        Eigen::Vector3d cw = Eigen::Vector3d::Zero(), cc = Eigen::Vector3d::Zero();
        for (std::size_t i = 0; i < world_.size(); ++i) {
            cw += world_[i];
            cc += cam[i];
        }
        cw /= double(world_.size());
        cc /= double(world_.size());
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        for (std::size_t i = 0; i < world_.size(); ++i) H += (cam[i] - cc) * (world_[i] - cw).transpose();
        rigid_transform pose;
        pose.rotation = nearest_rotation(H);
        pose.translation = cc - pose.rotation * cw;
        return pose;
    }

    double mean_error(const rigid_transform& pose) const {
        double sum = 0.0;
        for (std::size_t i = 0; i < world_.size(); ++i) {
            const Eigen::Vector3d xc = pose(world_[i]);
            if (!(xc.z() > 0.0)) return std::numeric_limits<double>::infinity();
            sum += (xc.head<2>() / xc.z() - image_[i]).norm();
        }
        return sum / double(world_.size());
    }

    std::span<const Eigen::Vector3d> world_;
    std::span<const Eigen::Vector2d> image_;
    std::array<Eigen::Vector3d, 4> control_;
    std::array<Vec12, 4> kernel_;
    Eigen::MatrixX4d alphas_;
};

// Real roots of a4 v^4 + ... + a0 from the companion matrix, polished by Newton steps.
std::vector<double> quartic_roots(const std::array<double, 5>& a) {
    if (std::abs(a[4]) < 1e-14 * (std::abs(a[3]) + std::abs(a[2]) + std::abs(a[1]) + std::abs(a[0]))) return {};
    Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
    for (int k = 0; k < 4; ++k) companion(0, k) = -a[3 - k] / a[4];
    for (int k = 1; k < 4; ++k) companion(k, k - 1) = 1.0;
    const Eigen::EigenSolver<Eigen::Matrix4d> eig(companion, false);
    std::vector<double> roots;
    for (int k = 0; k < 4; ++k) {
        const std::complex<double> z = eig.eigenvalues()(k);
        if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
        double v = z.real();
        for (int it = 0; it < 3; ++it) {
            const double f = (((a[4] * v + a[3]) * v + a[2]) * v + a[1]) * v + a[0];
            const double df = ((4.0 * a[4] * v + 3.0 * a[3]) * v + 2.0 * a[2]) * v + a[1];
            if (df == 0.0) break;
            v -= f / df;
        }
        roots.push_back(v);
    }
    return roots;
}

// Rigid transform taking the world triangle onto the camera-frame triangle.
rigid_transform align_points(std::span<const Eigen::Vector3d> world, std::span<const Eigen::Vector3d> cam) {
    Eigen::Vector3d cw = Eigen::Vector3d::Zero(), cc = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < world.size(); ++i) {
        cw += world[i];
        cc += cam[i];
    }
    cw /= double(world.size());
    cc /= double(world.size());
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < world.size(); ++i) H += (cam[i] - cc) * (world[i] - cw).transpose();
    rigid_transform pose;
    pose.rotation = nearest_rotation(H);
    pose.translation = cc - pose.rotation * cw;
    return pose;
}

// Grunert's three-point solution: up to four poses consistent with three bearings.
std::vector<rigid_transform> solve_p3p(const std::array<Eigen::Vector3d, 3>& world,
                                       const std::array<Eigen::Vector3d, 3>& bearing) {
    const double a2 = (world[1] - world[2]).squaredNorm();
    const double b2 = (world[0] - world[2]).squaredNorm();
    const double c2 = (world[0] - world[1]).squaredNorm();
    if (b2 <= 0.0 || c2 <= 0.0 || a2 <= 0.0) return {};
    const double ca = bearing[1].dot(bearing[2]), cb = bearing[0].dot(bearing[2]), cg = bearing[0].dot(bearing[1]);
    const double d = (a2 - c2) / b2, e = (a2 + c2) / b2;
    std::array<double, 5> k;
    k[4] = (d - 1.0) * (d - 1.0) - 4.0 * c2 / b2 * ca * ca;
    k[3] = 4.0 * (d * (1.0 - d) * cb - (1.0 - e) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb);
    k[2] = 2.0 * (d * d - 1.0 + 2.0 * d * d * cb * cb + 2.0 * (b2 - c2) / b2 * ca * ca - 4.0 * e * ca * cb * cg +
                  2.0 * (b2 - a2) / b2 * cg * cg);
    k[1] = 4.0 * (-d * (1.0 + d) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - e) * ca * cg);
    k[0] = (1.0 + d) * (1.0 + d) - 4.0 * a2 / b2 * cg * cg;

    std::vector<rigid_transform> poses;
    for (const double v : quartic_roots(k)) {
        const double denom = 2.0 * (cg - v * ca);
        if (std::abs(denom) < 1e-12) continue;
        const double u = ((d - 1.0) * v * v - 2.0 * d * cb * v + 1.0 + d) / denom;
        const double q = 1.0 + u * u - 2.0 * u * cg;
        if (!(q > 0.0) || u <= 0.0 || v <= 0.0) continue;
        const double s1 = std::sqrt(c2 / q);
        const std::array<Eigen::Vector3d, 3> cam{s1 * bearing[0], u * s1 * bearing[1], v * s1 * bearing[2]};
        const auto pose = align_points(world, cam);
        if (pose.rotation.allFinite() && pose.translation.allFinite()) poses.push_back(pose);
    }
    return poses;
}

constexpr double spare_ray_tolerance = 0.02;  // rad

// Four correspondences: P3P on the best-conditioned triple, the remaining point picks the
// candidate by its ray angle (sign of depth ignored), then cheirality is checked.
std::optional<rigid_transform> solve_p4p(std::span<const Eigen::Vector3d> world,
                                         std::span<const Eigen::Vector2d> normalized) {
    int spare = -1;
    double best_area = 0.0;
    for (int s = 0; s < 4; ++s) {
        std::array<Eigen::Vector3d, 3> tri;
        for (int i = 0, j = 0; i < 4; ++i)
            if (i != s) tri[j++] = world[i];
        const double area = (tri[1] - tri[0]).cross(tri[2] - tri[0]).norm();
        if (area > best_area) {
            best_area = area;
            spare = s;
        }
    }
    double extent = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) extent = std::max(extent, (world[i] - world[j]).norm());
    if (spare < 0 || best_area <= 1e-9 * extent * extent) return std::nullopt;

    std::array<Eigen::Vector3d, 3> tri, rays;
    for (int i = 0, j = 0; i < 4; ++i) {
        if (i == spare) continue;
        tri[j] = world[i];
        rays[j++] = normalized[i].homogeneous().normalized();
    }
    std::optional<rigid_transform> best;
    double best_err = std::numeric_limits<double>::infinity();
    for (const auto& pose : solve_p3p(tri, rays)) {
        const Eigen::Vector3d xc = pose(world[spare]);
        if (std::abs(xc.z()) < 1e-12) continue;
        const Eigen::Vector3d predicted = xc.z() > 0.0 ? xc.normalized() : Eigen::Vector3d(-xc.normalized());
        const double err = std::acos(std::clamp(predicted.dot(normalized[spare].homogeneous().normalized()), -1.0, 1.0));
        if (err < best_err) {
            best_err = err;
            best = pose;
        }
    }
    // the spare point has to agree with the chosen candidate, or the sample is inconsistent
    if (best_err > spare_ray_tolerance) return std::nullopt;
    return best;
}

bool in_front(const rigid_transform& pose, std::span<const Eigen::Vector3d> pts) {
    return std::all_of(pts.begin(), pts.end(), [&](const Eigen::Vector3d& p) { return pose(p).z() > 0.0; });
}

// Squared pixel residual, infinite behind the camera.
double squared_residual(const rigid_transform& pose, const camera_model& cam, const Eigen::Vector3d& X,
                        const Eigen::Vector2d& p) {
    const Eigen::Vector3d xc = pose(X);
    if (!(xc.z() > 0.0)) return std::numeric_limits<double>::infinity();
    return (cam.denormalize(xc.head<2>() / xc.z()) - p).squaredNorm();
}

void check_problem(const pnp_problem& prob, const ransac_config& cfg) {
    if (prob.points3d.size() != prob.points2d.size()) {
        throw error(error_code::precondition, "pnp: 3D and 2D lists differ in length");
    }
    const std::size_t needed = std::max<std::size_t>(4, std::size_t(std::max(cfg.min_inliers, 0)));
    if (prob.points3d.size() < needed) {
        throw error(error_code::precondition, "pnp: need at least " + std::to_string(needed) + " correspondences");
    }
    if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0) || !(cfg.inlier_threshold > 0.0) || cfg.max_iters < 1) {
        throw error(error_code::precondition, "pnp: invalid ransac configuration");
    }
    if (!prob.camera.valid()) {
        throw error(error_code::precondition, "pnp: invalid camera");
    }
    for (std::size_t i = 0; i < prob.points3d.size(); ++i) {
        for (std::size_t j = i + 1; j < prob.points3d.size(); ++j) {
            if ((prob.points3d[i] - prob.points3d[j]).norm() <= 1e-9) {
                throw error(error_code::precondition, "pnp: duplicate 3D points");
            }
        }
    }
}

struct hypothesis_score {
    std::size_t inliers = 0;
    double cost = std::numeric_limits<double>::infinity();
    bool valid = false;
    rigid_transform pose;

    bool better_than(const hypothesis_score& o) const {
        if (!valid) return false;
        if (!o.valid) return true;
        if (inliers != o.inliers) return inliers > o.inliers;
        return cost < o.cost;
    }
};

}  // namespace

std::size_t pnp_solution::inlier_count() const {
    return std::size_t(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

std::vector<rigid_transform> solve_pnp_minimal(std::span<const Eigen::Vector3d> points3d,
                                               std::span<const Eigen::Vector2d> points2d,
                                               const camera_model& camera) {
    if (points3d.size() != points2d.size() || points3d.size() < 4) {
        throw error(error_code::precondition, "solve_pnp_minimal: need at least 4 correspondences");
    }
    std::vector<Eigen::Vector2d> normalized(points2d.size());
    for (std::size_t i = 0; i < points2d.size(); ++i) normalized[i] = camera.normalize(points2d[i]);
    auto pose = points3d.size() == 4 ? solve_p4p(points3d, normalized) : epnp(points3d, normalized).solve();
    if (!pose || !pose->rotation.allFinite() || !pose->translation.allFinite() || !in_front(*pose, points3d)) {
        return {};
    }
    return {*pose};
}

double reprojection_rms(const rigid_transform& pose, const pnp_problem& prob, const std::vector<bool>& mask) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < prob.points3d.size(); ++i) {
        if (i < mask.size() && !mask[i]) continue;
        const Eigen::Vector3d xc = pose(prob.points3d[i]);
        sum += (prob.camera.denormalize(xc.head<2>() / xc.z()) - prob.points2d[i]).squaredNorm();
        ++n;
    }
    return n ? std::sqrt(sum / double(n)) : 0.0;
}

rigid_transform refine_pose(const rigid_transform& start, const pnp_problem& prob, const std::vector<bool>& mask,
                            int max_iters, double step_tolerance) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < prob.points3d.size(); ++i) {
        if (i >= mask.size() || mask[i]) idx.push_back(i);
    }
    const auto& cam = prob.camera;
    const auto cost_of = [&](const rigid_transform& pose) {
        double c = 0.0;
        for (auto i : idx) c += squared_residual(pose, cam, prob.points3d[i], prob.points2d[i]);
        return c;
    };

    rigid_transform pose = start;
    double cost = cost_of(pose);
    double lambda = 1e-3;
    for (int it = 0; it < max_iters && std::isfinite(cost); ++it) {
        Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> Jtr = Eigen::Matrix<double, 6, 1>::Zero();
        for (auto i : idx) {
            const Eigen::Vector3d rx = pose.rotation * prob.points3d[i];
            const Eigen::Vector3d xc = rx + pose.translation;
            const double iz = 1.0 / xc.z();
            Eigen::Matrix<double, 2, 3> dproj;
            dproj << cam.fx * iz, 0.0, -cam.fx * xc.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * xc.y() * iz * iz;
            Eigen::Matrix<double, 3, 6> dx;
            dx << -skew(rx), Eigen::Matrix3d::Identity();
            const Eigen::Matrix<double, 2, 6> J = dproj * dx;
            const Eigen::Vector2d r = cam.denormalize(xc.head<2>() * iz) - prob.points2d[i];
            JtJ += J.transpose() * J;
            Jtr += J.transpose() * r;
        }
        bool accepted = false;
        Eigen::Matrix<double, 6, 1> step;
        for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
            Eigen::Matrix<double, 6, 6> A = JtJ;
            A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
            step = -A.ldlt().solve(Jtr);
            if (!step.allFinite()) break;
            rigid_transform trial;
            trial.rotation = so3_exp(step.head<3>()) * pose.rotation;
            trial.translation = so3_exp(step.head<3>()) * pose.translation + step.tail<3>();
            trial.rotation = nearest_rotation(trial.rotation);
            const double c = cost_of(trial);
            if (c < cost) {
                pose = trial;
                cost = c;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted || step.norm() < step_tolerance) break;
    }
    return pose;
}

pnp_solution solve_pnp_ransac(const pnp_problem& prob, const ransac_config& cfg) {
    check_problem(prob, cfg);
    const std::size_t n = prob.points3d.size();
    const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;

    const auto score = [&](const rigid_transform& pose) {
        hypothesis_score s;
        s.valid = true;
        s.pose = pose;
        s.cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r2 = squared_residual(pose, prob.camera, prob.points3d[i], prob.points2d[i]);
            if (r2 <= thr2) {
                ++s.inliers;
                s.cost += r2;
            } else {
                s.cost += thr2;
            }
        }
        return s;
    };

    std::mt19937_64 rng(cfg.rng_seed);
    constexpr std::size_t batch = 32;
    hypothesis_score best;
    std::size_t iterations = 0;
    std::size_t budget = std::size_t(cfg.max_iters);
    while (iterations < budget) {
        // sampling stays sequential so the draw sequence is independent of the worker count
        const std::size_t count = std::min(batch, budget - iterations);
        std::vector<std::array<std::size_t, 4>> samples(count);
        for (auto& s : samples) {
            for (std::size_t k = 0; k < 4; ++k) {
                std::size_t pick;
                do {
                    pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
                } while (std::find(s.begin(), s.begin() + k, pick) != s.begin() + k);
                s[k] = pick;
            }
        }
        std::vector<hypothesis_score> scores(count);
        parallel_for(count, [&](std::size_t h) {
            std::array<Eigen::Vector3d, 4> X;
            std::array<Eigen::Vector2d, 4> x;
            for (std::size_t k = 0; k < 4; ++k) {
                X[k] = prob.points3d[samples[h][k]];
                x[k] = prob.points2d[samples[h][k]];
            }
            for (const auto& pose : solve_pnp_minimal(X, x, prob.camera)) {
                auto s = score(pose);
                if (s.better_than(scores[h])) scores[h] = std::move(s);
            }
        });
        for (std::size_t h = 0; h < count && iterations < budget; ++h) {
            ++iterations;
            if (scores[h].better_than(best)) {
                best = std::move(scores[h]);
                const double w = double(best.inliers) / double(n);
                const double miss = 1.0 - std::pow(w, 4.0);
                if (miss <= 0.0) {
                    budget = iterations;
                } else {
                    const double needed = std::log(1.0 - cfg.confidence) / std::log(miss);
                    if (std::isfinite(needed)) {
                        budget = std::min(budget, std::max(iterations, std::size_t(std::ceil(needed))));
                    }
                }
            }
        }
    }

    if (!best.valid || best.inliers < std::size_t(std::max(cfg.min_inliers, 4))) {
        throw no_consensus_error(best.valid ? best.inliers : 0,
                                 "pnp: best hypothesis has " + std::to_string(best.valid ? best.inliers : 0) +
                                     " inliers, need " + std::to_string(std::max(cfg.min_inliers, 4)));
    }

    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
        mask[i] = squared_residual(best.pose, prob.camera, prob.points3d[i], prob.points2d[i]) <= thr2;
    }
    pnp_solution sol;
    sol.pose = refine_pose(best.pose, prob, mask);
    std::vector<bool> refined_mask(n);
    for (std::size_t i = 0; i < n; ++i) {
        refined_mask[i] = squared_residual(sol.pose, prob.camera, prob.points3d[i], prob.points2d[i]) <= thr2;
    }
    // keep the larger consensus set; the refined pose already fits the original one
    sol.inlier_mask = std::count(refined_mask.begin(), refined_mask.end(), true) >=
                              std::count(mask.begin(), mask.end(), true)
                          ? refined_mask
                          : mask;
    sol.rms_reproj = reprojection_rms(sol.pose, prob, sol.inlier_mask);
    return sol;
}

nlohmann::json to_json(const pnp_solution& sol) {
    const auto q = sol.pose.quaternion();
    nlohmann::json inliers = nlohmann::json::array();
    for (std::size_t i = 0; i < sol.inlier_mask.size(); ++i) {
        if (sol.inlier_mask[i]) inliers.push_back(i);
    }
    return {{"quaternion", {q.w(), q.x(), q.y(), q.z()}},
            {"translation", {sol.pose.translation.x(), sol.pose.translation.y(), sol.pose.translation.z()}},
            {"rms", sol.rms_reproj},
            {"inliers", inliers}};
}

}  // namespace posekit
