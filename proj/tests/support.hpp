#pragma once

#include "posekit/image.hpp"
#include "posekit/pnp.hpp"
#include "posekit/scene.hpp"
#include "posekit/sfm.hpp"
#include "posekit/ssim.hpp"
#include "posekit/sync.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <tuple>
#include <vector>

namespace support {

// Smooth random intensity field made of Gaussian blobs plus a few slow waves, so translated copies
// can be rendered exactly at any subpixel offset.
class texture_field {
public:
    texture_field(std::uint64_t seed, int width, int height, int channels, int blobs = 60)
        : channels_(channels) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height), amp(-90.0, 90.0),
            sigma(4.0, 12.0), freq(0.03, 0.12), phase(0.0, 6.283185307179586);
        for (int c = 0; c < channels; ++c) {
            base_.push_back(110.0 + 30.0 * c);
            for (int i = 0; i < blobs; ++i) blobs_.push_back({c, ux(rng), uy(rng), sigma(rng), amp(rng)});
            for (int i = 0; i < 3; ++i) waves_.push_back({c, freq(rng), freq(rng), phase(rng), 12.0});
        }
    }

    double operator()(double x, double y, int c) const {
        double v = base_[c];
        for (const auto& b : blobs_) {
            if (b.c != c) continue;
            const double dx = x - b.x, dy = y - b.y;
            v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        }
        for (const auto& w : waves_) {
            if (w.c == c) v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
        }
        return std::clamp(v, 0.0, 255.0);
    }

    // Pixel (x, y) shows the field at (x - dx, y - dy): content moves by (+dx, +dy).
    posekit::image render(int width, int height, double dx = 0.0, double dy = 0.0) const {
        posekit::image img(width, height, channels_);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < channels_; ++c) img.at(x, y, c) = (*this)(x - dx, y - dy, c);
        return img;
    }

private:
    struct blob {
        int c;
        double x, y, sigma, amp;
    };
    struct wave {
        int c;
        double fx, fy, phase, amp;
    };
    int channels_;
    std::vector<double> base_;
    std::vector<blob> blobs_;
    std::vector<wave> waves_;
};

// Gray image with a colored Gaussian marker at every given point, as used by the known-shift
// refinement fixtures. Markers should sit at least 80 px apart so each patch sees one.
inline posekit::image render_markers(const std::vector<Eigen::Vector2d>& marks, int width, int height,
                                     double sigma = 12.0, double amplitude = 120.0) {
    posekit::image img(width, height, 3, 128.0);
    const std::array<double, 3> tint{1.0, -1.0, -1.0};
    const int reach = int(std::ceil(5.0 * sigma));
    for (const auto& m : marks) {
        const int x0 = std::max(0, int(m.x()) - reach), x1 = std::min(width - 1, int(m.x()) + reach);
        const int y0 = std::max(0, int(m.y()) - reach), y1 = std::min(height - 1, int(m.y()) + reach);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double r2 = (x - m.x()) * (x - m.x()) + (y - m.y()) * (y - m.y());
                const double g = amplitude * std::exp(-r2 / (2.0 * sigma * sigma));
                for (int c = 0; c < 3; ++c) img.at(x, y, c) += tint[c] * g;
            }
    }
    for (auto& v : img.data()) v = std::clamp(v, 0.0, 255.0);
    return img;
}

// 18 marker sites on a 6 x 3 grid, 100 px apart.
inline std::vector<Eigen::Vector2d> marker_grid() {
    std::vector<Eigen::Vector2d> out;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 6; ++i) out.emplace_back(85.0 + 100.0 * i, 100.0 + 100.0 * j);
    return out;
}

inline constexpr int marker_width = 700;
inline constexpr int marker_height = 400;

inline posekit::image random_image(std::mt19937_64& rng, int width, int height, int channels) {
    std::uniform_real_distribution<double> u(0.0, 255.0);
    posekit::image img(width, height, channels);
    for (auto& v : img.data()) v = u(rng);
    return img;
}

// Straight evaluation of the SSIM formula on one window of one channel.
inline double ssim_reference_window(const posekit::image& x, const posekit::image& y, int x0, int y0, int w, int c,
                                    const posekit::ssim_config& cfg) {
    const int n = w * w;
    double mx = 0, my = 0;
    for (int j = 0; j < w; ++j)
        for (int i = 0; i < w; ++i) {
            mx += x.at(x0 + i, y0 + j, c);
            my += y.at(x0 + i, y0 + j, c);
        }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cxy = 0;
    for (int j = 0; j < w; ++j)
        for (int i = 0; i < w; ++i) {
            const double a = x.at(x0 + i, y0 + j, c) - mx, b = y.at(x0 + i, y0 + j, c) - my;
            vx += a * a;
            vy += b * b;
            cxy += a * b;
        }
    vx /= n;
    vy /= n;
    cxy /= n;
    const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2), c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
    return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

inline double ssim_reference_map(const posekit::image& x, const posekit::image& y,
                                 const posekit::ssim_config& cfg) {
    double total = 0;
    int count = 0;
    for (int c = 0; c < x.channels(); ++c)
        for (int y0 = 0; y0 + cfg.window <= x.height(); ++y0)
            for (int x0 = 0; x0 + cfg.window <= x.width(); ++x0) {
                total += ssim_reference_window(x, y, x0, y0, cfg.window, c, cfg);
                ++count;
            }
    return total / count;
}

inline double rotation_error_deg(const posekit::rigid_transform& a, const posekit::rigid_transform& b) {
    return posekit::rotation_angle(a.rotation, b.rotation) * 180.0 / M_PI;
}

inline double translation_error_rel(const posekit::rigid_transform& est, const posekit::rigid_transform& truth) {
    return (est.translation - truth.translation).norm() / truth.translation.norm();
}

// RMS distance after the best similarity transform taking est onto truth.
inline double aligned_rms(const std::vector<Eigen::Vector3d>& est, const std::vector<Eigen::Vector3d>& truth) {
    Eigen::Matrix3Xd a(3, est.size()), b(3, truth.size());
    for (std::size_t i = 0; i < est.size(); ++i) {
        a.col(i) = est[i];
        b.col(i) = truth[i];
    }
    const Eigen::Matrix4d t = Eigen::umeyama(a, b, true);
    double sum = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        sum += ((t * est[i].homogeneous()).head<3>() - truth[i]).squaredNorm();
    }
    return std::sqrt(sum / est.size());
}

inline double diameter(const std::vector<Eigen::Vector3d>& pts) {
    double d = 0.0;
    for (const auto& p : pts)
        for (const auto& q : pts) d = std::max(d, (p - q).norm());
    return d;
}

// Keypoint matches between the first two views of a scene, paired through the ground-truth
// person ids, with the world joint behind each match.
struct scene_matches {
    std::vector<posekit::point_match> matches;
    std::vector<Eigen::Vector3d> joints;
};

inline scene_matches matches_between(const posekit::scene& s, bool exact) {
    const auto& a = s.views[0];
    const auto& b = s.views[1];
    scene_matches out;
    for (std::size_t i = 0; i < a.person_ids.size(); ++i) {
        for (std::size_t j = 0; j < b.person_ids.size(); ++j) {
            if (a.person_ids[i] != b.person_ids[j]) continue;
            const auto& pa = exact ? a.exact[i] : a.keypoints.persons[i];
            const auto& pb = exact ? b.exact[j] : b.keypoints.persons[j];
            for (int k = 0; k < posekit::keypoint_count; ++k) {
                if (!pa[k] || !pb[k]) continue;
                out.matches.push_back({*pa[k], *pb[k]});
                out.joints.push_back(s.persons[a.person_ids[i]].joint(k));
            }
        }
    }
    return out;
}

// Offline reference for the sync buffer: repeatedly take the globally closest unused pair within
// the window, ties broken by leader then follower timestamp.
inline std::vector<std::pair<double, double>> offline_matches(const std::vector<posekit::stamped_item>& items,
                                                                double window) {
    std::vector<double> leaders, followers;
    for (const auto& it : items) (it.source == posekit::stream::leader ? leaders : followers).push_back(it.timestamp);
    std::vector<bool> used_l(leaders.size(), false), used_f(followers.size(), false);
    std::vector<std::pair<double, double>> out;
    for (;;) {
        int bl = -1, bf = -1;
        std::tuple<double, double, double> best;
        for (std::size_t l = 0; l < leaders.size(); ++l) {
            if (used_l[l]) continue;
            for (std::size_t f = 0; f < followers.size(); ++f) {
                if (used_f[f]) continue;
                const double gap = std::abs(followers[f] - leaders[l]);
                if (gap > window) continue;
                const auto key = std::make_tuple(gap, leaders[l], followers[f]);
                if (bl < 0 || key < best) {
                    best = key;
                    bl = int(l);
                    bf = int(f);
                }
            }
        }
        if (bl < 0) break;
        used_l[bl] = used_f[bf] = true;
        out.emplace_back(leaders[bl], followers[bf]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<std::pair<double, double>> pair_stamps(const std::vector<posekit::matched_pair>& pairs) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : pairs) out.emplace_back(p.leader.timestamp, p.follower.timestamp);
    std::sort(out.begin(), out.end());
    return out;
}

// Alternating-gap schedule of two streams whose clocks drift, leader at ~30 Hz and follower at ~20 Hz.
inline std::vector<posekit::stamped_item> scripted_schedule(std::uint64_t seed, int count) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(0.0, 0.02);
    std::vector<posekit::stamped_item> items;
    double tl = 0.0, tf = 0.005;
    std::uint64_t payload = 0;
    while (int(items.size()) < count) {
        if (tl <= tf) {
            items.push_back({tl, payload++, posekit::stream::leader});
            tl += 0.033 + jitter(rng);
        } else {
            items.push_back({tf, payload++, posekit::stream::follower});
            tf += 0.05 + jitter(rng);
        }
    }
    return items;
}

// A random merge of the two streams that keeps each stream's own order.
inline std::vector<posekit::stamped_item> shuffle_streams(const std::vector<posekit::stamped_item>& items,
                                                           std::mt19937_64& rng) {
    std::vector<posekit::stamped_item> l, f, out;
    for (const auto& it : items) (it.source == posekit::stream::leader ? l : f).push_back(it);
    std::size_t i = 0, j = 0;
    while (i < l.size() || j < f.size()) {
        const std::size_t left = (l.size() - i) + (f.size() - j);
        const bool take_l = j == f.size() || (i < l.size() && std::uniform_int_distribution<std::size_t>(
                                                                  0, left - 1)(rng) < l.size() - i);
        out.push_back(take_l ? l[i++] : f[j++]);
    }
    return out;
}

// Follower pose and 20 leader-frame points 2-5 m in front of the follower; the first `outliers`
// observations are replaced by uniform pixels, the rest get Gaussian noise.
struct pnp_fixture {
    posekit::pnp_problem problem;
    posekit::rigid_transform truth;
};

inline pnp_fixture make_pnp_fixture(std::uint64_t seed, int points = 20, int outliers = 6, double noise = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    pnp_fixture fx;
    fx.problem.camera = {600, 600, 320, 240, 640, 480};
    fx.truth.rotation = posekit::so3_exp(Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.3);
    const Eigen::Vector3d direction(u(rng), 0.2 * u(rng), u(rng));
    fx.truth.translation = direction.normalized() * (1.0 + 0.5 * (u(rng) + 1.0));
    const posekit::rigid_transform leader_from_follower = fx.truth.inverse();
    for (int i = 0; i < points; ++i) {
        const Eigen::Vector3d in_follower(1.4 * u(rng), 0.9 * u(rng), 3.5 + 1.5 * u(rng));
        const Eigen::Vector3d X = leader_from_follower(in_follower);
        Eigen::Vector2d px = posekit::project(fx.problem.camera, fx.truth, X);
        if (i < outliers)
            px = Eigen::Vector2d((u(rng) + 1.0) * 320.0, (u(rng) + 1.0) * 240.0);
        else
            px += noise * Eigen::Vector2d(n(rng), n(rng));
        fx.problem.points3d.push_back(X);
        fx.problem.points2d.push_back(px);
    }
    return fx;
}

}  // namespace support
