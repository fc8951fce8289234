#include "posekit/refine.hpp"

#include "posekit/error.hpp"
#include "posekit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace posekit {

namespace {

constexpr double box_epsilon = 1e-6;

struct feasible_box {
    Eigen::Vector2d lo;
    Eigen::Vector2d hi;

    bool empty() const { return (lo.array() > hi.array()).any(); }
    Eigen::Vector2d clamp(const Eigen::Vector2d& p) const { return p.cwiseMax(lo).cwiseMin(hi); }
};

// Intersection of the L-inf region around p0 with the centers whose patch fits in img.
feasible_box feasible_region(const image& img, const Eigen::Vector2d& p0, const refine_config& cfg) {
    const double half = (cfg.patch - 1) / 2.0;
    const double reach = cfg.region - box_epsilon;
    feasible_box b;
    b.lo = Eigen::Vector2d(std::max(p0.x() - reach, half), std::max(p0.y() - reach, half));
    b.hi = Eigen::Vector2d(std::min(p0.x() + reach, img.width() - 1 - half),
                           std::min(p0.y() + reach, img.height() - 1 - half));
    return b;
}

std::vector<refine_flag> all_flags() {
    return {refine_flag::ok, refine_flag::leader_out_of_bounds, refine_flag::follower_out_of_bounds,
            refine_flag::infeasible};
}

}  // namespace

std::string_view to_string(refine_flag flag) {
    switch (flag) {
        case refine_flag::ok:
            return "ok";
        case refine_flag::leader_out_of_bounds:
            return "leader_out_of_bounds";
        case refine_flag::follower_out_of_bounds:
            return "follower_out_of_bounds";
        case refine_flag::infeasible:
            return "infeasible";
    }
    return "unknown";
}

double refine_loss(const image& img_l, const image& img_f, const correspondence& c, const refine_config& cfg) {
    const image ref = patch_at(img_l, c.p_l, cfg.patch, cfg.patch);
    const image cur = patch_at(img_f, c.p_f, cfg.patch, cfg.patch);
    return 1.0 - ssim_map(ref, cur, cfg.ssim);
}

refined_correspondence refine_one(const image& img_l, const image& img_f, const correspondence& c,
                                  const refine_config& cfg) {
    if (cfg.eta <= 0.0 || cfg.max_iter < 1) {
        throw error(error_code::precondition, "refine_one: eta must be positive and max_iter >= 1");
    }
    refined_correspondence out;
    out.c = c;
    out.p_f0 = c.p_f;
    out.loss0 = out.loss = std::numeric_limits<double>::quiet_NaN();

    if (!patch_fits(img_l, c.p_l, cfg.patch, cfg.patch)) {
        out.flag = refine_flag::leader_out_of_bounds;
        return out;
    }
    const auto region = feasible_region(img_f, c.p_f, cfg);
    if (region.empty()) {
        out.flag = refine_flag::infeasible;
        return out;
    }
    if (!patch_fits(img_f, c.p_f, cfg.patch, cfg.patch)) {
        out.flag = refine_flag::follower_out_of_bounds;
        return out;
    }

    const image ref = patch_at(img_l, c.p_l, cfg.patch, cfg.patch);
    Eigen::Vector2d p = c.p_f;
    Eigen::Vector2d best_p = p;
    double best_loss = std::numeric_limits<double>::infinity();
    const double rate = cfg.eta * cfg.gradient_gain;

    int iters = 0;
    while (iters < cfg.max_iter) {
        const auto vg = ssim_map_with_grad(ref, img_f, p, cfg.ssim);
        ++iters;
        const double loss = 1.0 - vg.value;
        if (iters == 1) out.loss0 = loss;
        if (loss < best_loss) {
            best_loss = loss;
            best_p = p;
        }
        // grad L = -grad SSIM
        const Eigen::Vector2d next = region.clamp(p + rate * vg.grad);
        const double step = (next - p).norm();
        p = next;
        if (step < cfg.step_tolerance) {
            break;
        }
    }
    // the final step has not been scored yet
    if (p != best_p) {
        const double loss = 1.0 - ssim_map(ref, patch_at(img_f, p, cfg.patch, cfg.patch), cfg.ssim);
        if (loss < best_loss) {
            best_loss = loss;
            best_p = p;
        }
    }
    out.c.p_f = best_p;
    out.loss = best_loss;
    out.iters = iters;
    return out;
}

std::vector<refined_correspondence> refine_all(const image& img_l, const image& img_f,
                                               const std::vector<correspondence>& cs,
                                               const refine_config& cfg) {
    if (cs.empty()) {
        throw error(error_code::precondition, "refine_all: empty correspondence list");
    }
    std::vector<refined_correspondence> out(cs.size());
    parallel_for(cs.size(), [&](std::size_t i) { out[i] = refine_one(img_l, img_f, cs[i], cfg); });
    return out;
}

nlohmann::json to_json(const std::vector<refined_correspondence>& refined) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : refined) {
        out.push_back({{"person", r.c.person},
                       {"slot", r.c.slot},
                       {"p_l", {r.c.p_l.x(), r.c.p_l.y()}},
                       {"p_f0", {r.p_f0.x(), r.p_f0.y()}},
                       {"p_f", {r.c.p_f.x(), r.c.p_f.y()}},
                       {"loss0", r.loss0},
                       {"loss", r.loss},
                       {"iters", r.iters},
                       {"flag", std::string(to_string(r.flag))}});
    }
    return out;
}

std::vector<refined_correspondence> refined_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw error(error_code::parse, "refined correspondences: expected an array");
    const auto point = [](const nlohmann::json& j) {
        return Eigen::Vector2d(j.at(0).get<double>(), j.at(1).get<double>());
    };
    const auto number = [](const nlohmann::json& j) {
        return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
    };
    std::vector<refined_correspondence> out;
    try {
        for (const auto& e : doc) {
            refined_correspondence r;
            r.c.person = e.value("person", -1);
            r.c.slot = e.at("slot").get<int>();
            r.c.p_l = point(e.at("p_l"));
            r.c.p_f = point(e.at("p_f"));
            r.p_f0 = point(e.at("p_f0"));
            r.loss0 = number(e.at("loss0"));
            r.loss = number(e.at("loss"));
            r.iters = e.at("iters").get<int>();
            const auto flag = e.at("flag").get<std::string>();
            bool known = false;
            for (auto f : all_flags()) {
                if (to_string(f) == flag) {
                    r.flag = f;
                    known = true;
                }
            }
            if (!known) throw error(error_code::parse, "refined correspondences: unknown flag " + flag);
            out.push_back(r);
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(error_code::parse, std::string("refined correspondences: ") + e.what());
    }
    return out;
}

}  // namespace posekit
