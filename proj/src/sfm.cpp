#include "posekit/sfm.hpp"

#include "posekit/error.hpp"
#include "posekit/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace posekit {

namespace {

constexpr std::size_t sample_size = 8;

// Similarity taking the points to zero mean and mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(std::span<const point_match> matches, bool left) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& m : matches) mean += left ? m.left : m.right;
    mean /= double(matches.size());
    double spread = 0.0;
    for (const auto& m : matches) spread += ((left ? m.left : m.right) - mean).norm();
    spread /= double(matches.size());
    const double s = spread > 0.0 ? std::sqrt(2.0) / spread : 1.0;
    Eigen::Matrix3d T;
    T << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
    return T;
}

struct linear_solve {
    Eigen::Matrix3d F;
    double conditioning;  // sigma_7 / sigma_0 of the normalized design matrix
};

linear_solve solve_linear(std::span<const point_match> matches) {
    const Eigen::Matrix3d Tl = normalizing_transform(matches, true);
    const Eigen::Matrix3d Tr = normalizing_transform(matches, false);
    Eigen::MatrixXd A(std::max<std::size_t>(matches.size(), 9), 9);
    A.setZero();
    for (std::size_t i = 0; i < matches.size(); ++i) {
        const Eigen::Vector3d a = Tl * matches[i].left.homogeneous();
        const Eigen::Vector3d b = Tr * matches[i].right.homogeneous();
        // b^T F a = sum_ij b_i F_ij a_j, F row-major
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) A(i, 3 * r + c) = b(r) * a(c);
        }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    linear_solve out;
    out.conditioning = sv(0) > 0.0 ? sv(7) / sv(0) : 0.0;
    const Eigen::Matrix<double, 9, 1> f = svd.matrixV().col(8);
    Eigen::Matrix3d Fn;
    Fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

    Eigen::JacobiSVD<Eigen::Matrix3d> fs(Fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d = fs.singularValues();
    d(2) = 0.0;
    Fn = fs.matrixU() * d.asDiagonal() * fs.matrixV().transpose();

    Eigen::Matrix3d F = Tr.transpose() * Fn * Tl;
    F /= F.norm();
    // fix the sign so results do not flip between equivalent solves
    Eigen::Index r, c;
    F.cwiseAbs().maxCoeff(&r, &c);
    if (F(r, c) < 0.0) F = -F;
    out.F = F;
    return out;
}

constexpr double degenerate_conditioning = 1e-6;

// Depths of a match in both cameras under (R, t), for normalized coordinates.
Eigen::Vector2d match_depths(const Eigen::Matrix3d& R, const Eigen::Vector3d& t, const Eigen::Vector3d& x1,
                             const Eigen::Vector3d& x2) {
    // lambda2 x2 = lambda1 R x1 + t
    Eigen::Matrix<double, 3, 2> A;
    A << R * x1, -x2;
    return A.colPivHouseholderQr().solve(-t);
}

}  // namespace

Eigen::Matrix3d eight_point(std::span<const point_match> matches) {
    if (matches.size() < sample_size) {
        throw error(error_code::precondition, "eight_point: need at least 8 matches");
    }
    const auto s = solve_linear(matches);
    if (!(s.conditioning >= degenerate_conditioning) || !s.F.allFinite()) {
        throw error(error_code::geometry_degenerate,
                    "eight_point: degenerate configuration (conditioning " + std::to_string(s.conditioning) + ")");
    }
    return s.F;
}

double sampson_distance(const Eigen::Matrix3d& F, const point_match& m) {
    const Eigen::Vector3d a = m.left.homogeneous();
    const Eigen::Vector3d b = m.right.homogeneous();
    const Eigen::Vector3d Fa = F * a;
    const Eigen::Vector3d Ftb = F.transpose() * b;
    const double num = b.dot(Fa);
    const double den = Fa.head<2>().squaredNorm() + Ftb.head<2>().squaredNorm();
    if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
    return num * num / den;
}

fundamental_estimate estimate_fundamental(std::span<const point_match> matches, const ransac_config& cfg) {
    const std::size_t n = matches.size();
    if (n < sample_size) {
        throw error(error_code::precondition, "estimate_fundamental: need at least 8 matches, got " + std::to_string(n));
    }
    if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0) || !(cfg.inlier_threshold > 0.0) || cfg.max_iters < 1) {
        throw error(error_code::precondition, "estimate_fundamental: invalid ransac configuration");
    }
    if (solve_linear(matches).conditioning < degenerate_conditioning) {
        throw error(error_code::geometry_degenerate,
                    "estimate_fundamental: matches do not constrain F (planar scene or pure rotation)");
    }
    const std::size_t needed = std::max<std::size_t>(sample_size, std::size_t(std::max(cfg.min_inliers, 0)));
    const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;

    struct scored {
        bool valid = false;
        std::size_t inliers = 0;
        double cost = std::numeric_limits<double>::infinity();
        Eigen::Matrix3d F;
        bool better_than(const scored& o) const {
            if (!valid) return false;
            if (!o.valid) return true;
            if (inliers != o.inliers) return inliers > o.inliers;
            return cost < o.cost;
        }
    };
    const auto score = [&](const Eigen::Matrix3d& F) {
        scored s{true, 0, 0.0, F};
        for (const auto& m : matches) {
            const double d = sampson_distance(F, m);
            if (d <= thr2) {
                ++s.inliers;
                s.cost += d;
            } else {
                s.cost += thr2;
            }
        }
        return s;
    };

    std::mt19937_64 rng(cfg.rng_seed);
    constexpr std::size_t batch = 32;
    scored best;
    std::size_t iterations = 0;
    std::size_t budget = std::size_t(cfg.max_iters);
    while (iterations < budget) {
        const std::size_t count = std::min(batch, budget - iterations);
        std::vector<std::array<std::size_t, sample_size>> samples(count);
        for (auto& s : samples) {
            for (std::size_t k = 0; k < sample_size; ++k) {
                std::size_t pick;
                do {
                    pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
                } while (std::find(s.begin(), s.begin() + k, pick) != s.begin() + k);
                s[k] = pick;
            }
        }
        std::vector<scored> results(count);
        parallel_for(count, [&](std::size_t h) {
            std::array<point_match, sample_size> sample;
            for (std::size_t k = 0; k < sample_size; ++k) sample[k] = matches[samples[h][k]];
            const auto s = solve_linear(sample);
            if (s.conditioning < degenerate_conditioning || !s.F.allFinite()) return;
            results[h] = score(s.F);
        });
        for (std::size_t h = 0; h < count && iterations < budget; ++h) {
            ++iterations;
            if (!results[h].better_than(best)) continue;
            best = results[h];
            const double miss = 1.0 - std::pow(double(best.inliers) / double(n), double(sample_size));
            if (miss <= 0.0) {
                budget = iterations;
            } else {
                const double want = std::log(1.0 - cfg.confidence) / std::log(miss);
                if (std::isfinite(want)) budget = std::min(budget, std::max(iterations, std::size_t(std::ceil(want))));
            }
        }
    }
    if (!best.valid || best.inliers < needed) {
        const std::size_t got = best.valid ? best.inliers : 0;
        throw no_consensus_error(got, "estimate_fundamental: best hypothesis has " + std::to_string(got) +
                                          " inliers, need " + std::to_string(needed));
    }

    // polish on the consensus set, keeping it only if it does not lose support
    fundamental_estimate out{best.F, std::vector<bool>(n)};
    std::vector<point_match> inliers;
    for (std::size_t i = 0; i < n; ++i) {
        if (sampson_distance(best.F, matches[i]) <= thr2) inliers.push_back(matches[i]);
    }
    const auto polished = solve_linear(inliers);
    if (polished.conditioning >= degenerate_conditioning && polished.F.allFinite()) {
        const auto s = score(polished.F);
        if (!best.better_than(s)) out.F = polished.F;
    }
    for (std::size_t i = 0; i < n; ++i) out.inlier_mask[i] = sampson_distance(out.F, matches[i]) <= thr2;
    return out;
}

Eigen::Matrix3d essential_from_fundamental(const Eigen::Matrix3d& F, const camera_model& left,
                                           const camera_model& right) {
    const Eigen::Matrix3d E = right.K().transpose() * F * left.K();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double s = 0.5 * (svd.singularValues()(0) + svd.singularValues()(1));
    return svd.matrixU() * Eigen::Vector3d(s, s, 0.0).asDiagonal() * svd.matrixV().transpose();
}

rigid_transform recover_pose(const Eigen::Matrix3d& E, std::span<const point_match> matches,
                             const camera_model& left, const camera_model& right) {
    if (!E.allFinite() || E.norm() < 1e-12) {
        throw error(error_code::geometry_degenerate, "recover_pose: essential matrix is zero");
    }
    if (matches.empty()) {
        throw error(error_code::precondition, "recover_pose: need at least one match");
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d U = svd.matrixU();
    Eigen::Matrix3d V = svd.matrixV();
    if (U.determinant() < 0.0) U = -U;
    if (V.determinant() < 0.0) V = -V;
    Eigen::Matrix3d W;
    W << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const std::array<Eigen::Matrix3d, 2> rotations = {U * W * V.transpose(), U * W.transpose() * V.transpose()};
    const Eigen::Vector3d u3 = U.col(2).normalized();

    std::vector<Eigen::Vector3d> x1(matches.size()), x2(matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) {
        x1[i] = left.normalize(matches[i].left).homogeneous();
        x2[i] = right.normalize(matches[i].right).homogeneous();
    }

    std::array<rigid_transform, 4> candidates;
    std::array<std::size_t, 4> in_front{};
    for (int k = 0; k < 4; ++k) {
        candidates[k].rotation = rotations[k / 2];
        candidates[k].translation = (k % 2 == 0) ? u3 : Eigen::Vector3d(-u3);
        for (std::size_t i = 0; i < matches.size(); ++i) {
            const Eigen::Vector2d d = match_depths(candidates[k].rotation, candidates[k].translation, x1[i], x2[i]);
            if (d(0) > 0.0 && d(1) > 0.0) ++in_front[k];
        }
    }
    std::array<int, 4> order = {0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return in_front[a] > in_front[b]; });
    const std::size_t best = in_front[order[0]];
    const std::size_t second = in_front[order[1]];
    if (best == 0) {
        throw error(error_code::behind_camera, "recover_pose: no decomposition puts a match in front of both cameras");
    }
    if (double(second) >= 0.9 * double(best)) {
        throw error(error_code::ambiguity, "recover_pose: cheirality does not separate the decompositions (" +
                                               std::to_string(best) + " vs " + std::to_string(second) + ")");
    }
    return candidates[order[0]];
}

double two_view_rms(const rigid_transform& pose, std::span<const Eigen::Vector3d> points,
                    std::span<const point_match> matches, const camera_model& left, const camera_model& right) {
    if (points.size() != matches.size() || points.empty()) {
        throw error(error_code::precondition, "two_view_rms: one point per match required");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Eigen::Vector3d& X = points[i];
        const Eigen::Vector3d Y = pose(X);
        sum += (left.denormalize(X.head<2>() / X.z()) - matches[i].left).squaredNorm();
        sum += (right.denormalize(Y.head<2>() / Y.z()) - matches[i].right).squaredNorm();
    }
    return std::sqrt(sum / double(2 * points.size()));
}

namespace {

// Levenberg-Marquardt over the right pose and all points, left camera fixed at the origin.
void refine_two_view(rigid_transform& pose, std::vector<Eigen::Vector3d>& points,
                     std::span<const point_match> matches, const camera_model& left, const camera_model& right) {
    const std::size_t n = points.size();
    const Eigen::Index dim = Eigen::Index(6 + 3 * n);
    const auto cost_of = [&](const rigid_transform& p, const std::vector<Eigen::Vector3d>& X) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d Y = p(X[i]);
            if (!(X[i].z() > 0.0) || !(Y.z() > 0.0)) return std::numeric_limits<double>::infinity();
            c += (left.denormalize(X[i].head<2>() / X[i].z()) - matches[i].left).squaredNorm();
            c += (right.denormalize(Y.head<2>() / Y.z()) - matches[i].right).squaredNorm();
        }
        return c;
    };
    const auto dproj = [](const camera_model& cam, const Eigen::Vector3d& x) {
        const double iz = 1.0 / x.z();
        Eigen::Matrix<double, 2, 3> d;
        d << cam.fx * iz, 0.0, -cam.fx * x.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * x.y() * iz * iz;
        return d;
    };

    double cost = cost_of(pose, points);
    double lambda = 1e-4;
    for (int it = 0; it < 50 && std::isfinite(cost) && cost > 0.0; ++it) {
        Eigen::MatrixXd JtJ = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd Jtr = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Index pi = Eigen::Index(6 + 3 * i);
            const Eigen::Vector3d& X = points[i];
            const Eigen::Matrix<double, 2, 3> Jl = dproj(left, X);
            const Eigen::Vector2d rl = left.denormalize(X.head<2>() / X.z()) - matches[i].left;
            JtJ.block<3, 3>(pi, pi) += Jl.transpose() * Jl;
            Jtr.segment<3>(pi) += Jl.transpose() * rl;

            const Eigen::Vector3d RX = pose.rotation * X;
            const Eigen::Vector3d Y = RX + pose.translation;
            const Eigen::Matrix<double, 2, 3> D = dproj(right, Y);
            Eigen::Matrix<double, 2, 6> Jp;
            Jp << D * -skew(RX), D;
            const Eigen::Matrix<double, 2, 3> Jx = D * pose.rotation;
            const Eigen::Vector2d rr = right.denormalize(Y.head<2>() / Y.z()) - matches[i].right;
            JtJ.topLeftCorner<6, 6>() += Jp.transpose() * Jp;
            JtJ.block<6, 3>(0, pi) += Jp.transpose() * Jx;
            JtJ.block<3, 6>(pi, 0) += Jx.transpose() * Jp;
            JtJ.block<3, 3>(pi, pi) += Jx.transpose() * Jx;
            Jtr.head<6>() += Jp.transpose() * rr;
            Jtr.segment<3>(pi) += Jx.transpose() * rr;
        }

        bool accepted = false;
        Eigen::VectorXd step;
        for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-9);
            step = -A.ldlt().solve(Jtr);
            if (!step.allFinite()) break;
            rigid_transform trial;
            const Eigen::Matrix3d dR = so3_exp(step.head<3>());
            trial.rotation = nearest_rotation(dR * pose.rotation);
            trial.translation = dR * pose.translation + step.segment<3>(3);
            std::vector<Eigen::Vector3d> trial_points(n);
            for (std::size_t i = 0; i < n; ++i) trial_points[i] = points[i] + step.segment<3>(Eigen::Index(6 + 3 * i));
            const double c = cost_of(trial, trial_points);
            if (c < cost) {
                pose = trial;
                points = std::move(trial_points);
                cost = c;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted || step.norm() < 1e-12) break;
    }

    // restore the unit-baseline gauge; reprojections are unchanged by a common scale
    const double scale = pose.translation.norm();
    if (scale > 0.0) {
        pose.translation /= scale;
        for (auto& X : points) X /= scale;
    }
}

template <typename F>
auto in_stage(const char* stage, F&& body) {
    try {
        return body();
    } catch (const stage_error&) {
        throw;
    } catch (const error& e) {
        throw stage_error(stage, e);
    }
}

}  // namespace

two_view_reconstruction reconstruct_two_view(std::span<const point_match> matches, const camera_model& left,
                                             const camera_model& right, const ransac_config& cfg) {
    if (matches.size() < sample_size) {
        throw error(error_code::precondition,
                    "reconstruct_two_view: need at least 8 correspondences, got " + std::to_string(matches.size()));
    }
    two_view_reconstruction out;
    const auto fe = in_stage("fundamental", [&] { return estimate_fundamental(matches, cfg); });
    out.F = fe.F;
    out.inlier_mask = fe.inlier_mask;
    out.E = essential_from_fundamental(out.F, left, right);

    std::vector<point_match> inliers;
    for (std::size_t i = 0; i < matches.size(); ++i) {
        if (out.inlier_mask[i]) inliers.push_back(matches[i]);
    }
    out.pose = in_stage("pose", [&] { return recover_pose(out.E, inliers, left, right); });

    const std::array<view, 2> views = {view{left, rigid_transform::identity()}, view{right, out.pose}};
    const auto triangulated = in_stage("triangulation", [&] {
        std::vector<Eigen::Vector3d> pts;
        for (const auto& m : inliers) {
            const std::array<Eigen::Vector2d, 2> obs = {m.left, m.right};
            pts.push_back(triangulate_linear(views, obs).point);
        }
        return pts;
    });
    // matches that pass the epipolar test but land behind a camera are demoted to outliers
    std::vector<point_match> kept;
    for (std::size_t i = 0, k = 0; i < matches.size(); ++i) {
        if (!out.inlier_mask[i]) continue;
        const Eigen::Vector3d& X = triangulated[k++];
        if (X.z() > 0.0 && out.pose(X).z() > 0.0) {
            out.points.push_back(X);
            kept.push_back(matches[i]);
        } else {
            out.inlier_mask[i] = false;
        }
    }
    if (kept.size() < sample_size) {
        throw stage_error("triangulation", error(error_code::behind_camera,
                                                 "reconstruct_two_view: fewer than 8 points in front of both cameras"));
    }
    inliers = std::move(kept);
    out.rms_before = two_view_rms(out.pose, out.points, inliers, left, right);
    refine_two_view(out.pose, out.points, inliers, left, right);
    out.rms_after = two_view_rms(out.pose, out.points, inliers, left, right);
    return out;
}

void write_ply(std::ostream& out, std::span<const Eigen::Vector3d> points) {
    out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    out << std::setprecision(17);
    for (const auto& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

std::vector<Eigen::Vector3d> read_ply(std::istream& in) {
    std::string line;
    std::size_t count = 0;
    bool header_done = false;
    if (!std::getline(in, line) || line != "ply") throw error(error_code::parse, "ply: missing magic");
    while (std::getline(in, line)) {
        if (line.rfind("element vertex", 0) == 0) count = std::stoul(line.substr(15));
        if (line == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) throw error(error_code::parse, "ply: missing end_header");
    std::vector<Eigen::Vector3d> points(count);
    for (auto& p : points) {
        if (!(in >> p.x() >> p.y() >> p.z())) throw error(error_code::parse, "ply: truncated vertex list");
    }
    return points;
}

}  // namespace posekit
