#include "posekit/reid.hpp"

#include "posekit/error.hpp"
#include "posekit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace posekit {

namespace {

constexpr double tie_tolerance = 1e-9;

struct pixel_rect {
    int x0, y0, width, height;
};

pixel_rect to_pixels(const box& b, const image& img, double min_area) {
    if (!(b.area() >= min_area) || b.x_min < 0.0 || b.y_min < 0.0 || b.x_max > img.width() - 1 ||
        b.y_max > img.height() - 1) {
        throw error(error_code::precondition, "part_similarity: invalid body-part box");
    }
    const int x0 = static_cast<int>(std::floor(b.x_min));
    const int y0 = static_cast<int>(std::floor(b.y_min));
    const int x1 = static_cast<int>(std::ceil(b.x_max));
    const int y1 = static_cast<int>(std::ceil(b.y_max));
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace

double part_similarity(const image& img_l, const box& box_l, const image& img_f, const box& box_f,
                       const reid_config& cfg) {
    if (img_l.channels() != img_f.channels()) {
        throw error(error_code::shape, "part_similarity: channel counts differ");
    }
    const auto rl = to_pixels(box_l, img_l, cfg.min_area);
    const auto rf = to_pixels(box_f, img_f, cfg.min_area);
    const image follower = crop(img_f, rf.x0, rf.y0, rf.width, rf.height).pixels;
    const image leader =
        resize_bilinear(crop(img_l, rl.x0, rl.y0, rl.width, rl.height).pixels, rf.width, rf.height);
    if (cfg.windowed && rf.width >= cfg.ssim.window && rf.height >= cfg.ssim.window) {
        return ssim_map(leader, follower, cfg.ssim);
    }
    return ssim_window(leader, follower, cfg.ssim);
}

std::vector<std::vector<pair_score>> score_matrix(const image& leader_img, const keypoint_set& leader,
                                                  const image& follower_img,
                                                  const keypoint_set& follower,
                                                  const reid_config& cfg) {
    const box_config bcfg{.min_area = cfg.min_area};
    std::vector<body_part_boxes> lboxes, fboxes;
    for (const auto& p : leader.persons) {
        lboxes.push_back(extract_boxes(p, leader_img.width(), leader_img.height(), bcfg));
    }
    for (const auto& p : follower.persons) {
        fboxes.push_back(extract_boxes(p, follower_img.width(), follower_img.height(), bcfg));
    }

    const std::size_t nf = fboxes.size();
    const std::size_t nl = lboxes.size();
    std::vector<std::vector<pair_score>> scores(nf, std::vector<pair_score>(nl));
    parallel_for(nf * nl, [&](std::size_t k) {
        const std::size_t f = k / nl;
        const std::size_t l = k % nl;
        pair_score ps{-std::numeric_limits<double>::infinity(), {}};
        double sum = 0.0;
        for (auto part : all_body_parts) {
            const auto& bl = lboxes[l][part];
            const auto& bf = fboxes[f][part];
            if (!bl || !bf) continue;
            sum += part_similarity(leader_img, *bl, follower_img, *bf, cfg);
            ps.parts.push_back(part);
        }
        if (!ps.parts.empty()) {
            ps.score = sum / static_cast<double>(ps.parts.size());
        }
        scores[f][l] = std::move(ps);
    });
    return scores;
}

std::vector<association> assign(const std::vector<std::vector<pair_score>>& scores, const reid_config& cfg) {
    struct candidate {
        int f, l;
        double score;
    };
    std::vector<candidate> candidates;
    for (std::size_t f = 0; f < scores.size(); ++f) {
        for (std::size_t l = 0; l < scores[f].size(); ++l) {
            const auto& ps = scores[f][l];
            if (!ps.parts.empty() && ps.score >= cfg.delta_min) {
                candidates.push_back({int(f), int(l), ps.score});
            }
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const candidate& a, const candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.f != b.f) return a.f < b.f;
        return a.l < b.l;
    });

    const std::size_t nf = scores.size();
    const std::size_t nl = nf ? scores.front().size() : 0;
    std::vector<bool> follower_done(nf, false);
    std::vector<double> leader_claim(nl, std::numeric_limits<double>::quiet_NaN());
    std::vector<association> out;
    for (const auto& c : candidates) {
        if (follower_done[c.f]) continue;
        const double claim = leader_claim[c.l];
        if (!std::isnan(claim) && std::abs(claim - c.score) > tie_tolerance) continue;
        follower_done[c.f] = true;
        if (std::isnan(claim)) leader_claim[c.l] = c.score;
        out.push_back({c.f, c.l, c.score, scores[c.f][c.l].parts});
    }
    std::sort(out.begin(), out.end(),
              [](const association& a, const association& b) { return a.follower_index < b.follower_index; });
    return out;
}

std::vector<association> associate(const image& leader_img, const keypoint_set& leader,
                                   const image& follower_img, const keypoint_set& follower,
                                   const reid_config& cfg) {
    return assign(score_matrix(leader_img, leader, follower_img, follower, cfg), cfg);
}

nlohmann::json to_json(const std::vector<association>& associations) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& a : associations) {
        nlohmann::json parts = nlohmann::json::array();
        for (auto p : a.parts_used) parts.push_back(std::string(part_name(p)));
        out.push_back({{"follower", a.follower_index},
                       {"leader", a.leader_index},
                       {"score", a.score},
                       {"parts_used", parts}});
    }
    return out;
}

std::vector<association> associations_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw error(error_code::parse, "associations: expected an array");
    std::vector<association> out;
    try {
        for (const auto& entry : doc) {
            association a;
            a.follower_index = entry.at("follower").get<int>();
            a.leader_index = entry.at("leader").get<int>();
            a.score = entry.at("score").get<double>();
            for (const auto& name : entry.at("parts_used")) {
                const auto s = name.get<std::string>();
                const auto it = std::find_if(all_body_parts.begin(), all_body_parts.end(),
                                             [&](body_part p) { return part_name(p) == s; });
                if (it == all_body_parts.end()) throw error(error_code::parse, "associations: unknown part " + s);
                a.parts_used.push_back(*it);
            }
            out.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(error_code::parse, std::string("associations: ") + e.what());
    }
    return out;
}

std::vector<roc_point> roc_sweep(std::span<const labeled_score> corpus, std::span<const double> thresholds) {
    const auto positives = std::count_if(corpus.begin(), corpus.end(), [](const auto& s) { return s.same; });
    const auto negatives = static_cast<std::ptrdiff_t>(corpus.size()) - positives;
    if (positives == 0 || negatives == 0) {
        throw error(error_code::precondition, "roc_sweep: corpus needs both positive and negative pairs");
    }
    std::vector<roc_point> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        std::ptrdiff_t tp = 0, fp = 0;
        for (const auto& s : corpus) {
            if (s.score >= t) (s.same ? tp : fp) += 1;
        }
        out.push_back({t, double(tp) / double(positives), double(fp) / double(negatives)});
    }
    return out;
}

double roc_auc(std::span<const labeled_score> corpus) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (const auto& p : corpus) {
        if (!p.same) continue;
        for (const auto& n : corpus) {
            if (n.same) continue;
            ++pairs;
            if (p.score > n.score) wins += 1.0;
            else if (p.score == n.score) wins += 0.5;
        }
    }
    if (pairs == 0) {
        throw error(error_code::precondition, "roc_auc: corpus needs both positive and negative pairs");
    }
    return wins / double(pairs);
}

}  // namespace posekit
