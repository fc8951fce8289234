#include "posekit/error.hpp"
#include "posekit/pipeline.hpp"
#include "posekit/pnp.hpp"
#include "posekit/refine.hpp"
#include "posekit/reid.hpp"
#include "posekit/scene.hpp"
#include "posekit/sfm.hpp"
#include "posekit/ssim.hpp"
#include "posekit/sync.hpp"
#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace posekit;

namespace {

struct outcome {
    bool pass = false;
    std::string detail;
};

std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

// Criterion 1
constexpr double ssim_oracle_tolerance = 1e-9;
constexpr double constant_patch_value = 9.9985e-5;
constexpr double constant_patch_relative = 1e-4;

outcome ssim_correctness() {
    std::mt19937_64 rng(101);
    const ssim_config cfg;
    bool ok = true;
    double worst_oracle = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int channels = trial % 2 ? 3 : 1;
        const image x = support::random_image(rng, 16, 16, channels), y = support::random_image(rng, 16, 16, channels);
        const double xy = ssim_map(x, y), yx = ssim_map(y, x);
        worst_oracle = std::max(worst_oracle, std::abs(xy - support::ssim_reference_map(x, y, cfg)));
        ok &= xy == yx;
        ok &= xy >= -1.0 && xy <= 1.0;
        ok &= std::abs(ssim_map(x, x) - 1.0) < 1e-12;
        ok &= std::abs(ssim_window(x, y) - ssim_window(y, x)) < 1e-15;
    }
    const double constant = ssim_window(image(8, 8, 1, 0.0), image(8, 8, 1, 255.0));
    const double relative = std::abs(constant - constant_patch_value) / constant_patch_value;
    ok &= relative <= constant_patch_relative && worst_oracle <= ssim_oracle_tolerance;
    return {ok, format("oracle max diff %.2e, constant patch %.5e", worst_oracle, constant)};
}

// Criterion 2
constexpr double gradient_relative_tolerance = 1e-2;

outcome ssim_gradient() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> pos(30.0, 70.0), frac(0.1, 0.9);
    const double h = 1e-3;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const support::texture_field field(2000 + trial, 100, 100, trial % 3 ? 3 : 1);
        const image img = field.render(100, 100);
        const image ref = patch_at(img, {std::floor(pos(rng)) + frac(rng), std::floor(pos(rng)) + frac(rng)}, 32, 32);
        // Bilinear sampling is only piecewise smooth, so probes stay off the pixel grid lines.
        const Eigen::Vector2d center(std::floor(pos(rng)) + frac(rng), std::floor(pos(rng)) + frac(rng));
        const auto at = [&](const Eigen::Vector2d& c) { return ssim_map(ref, patch_at(img, c, 32, 32)); };
        const Eigen::Vector2d fd((at(center + Eigen::Vector2d(h, 0)) - at(center - Eigen::Vector2d(h, 0))) / (2 * h),
                                 (at(center + Eigen::Vector2d(0, h)) - at(center - Eigen::Vector2d(0, h))) / (2 * h));
        const Eigen::Vector2d g = ssim_grad(ref, img, center);
        worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-6));
    }
    return {worst <= gradient_relative_tolerance, format("max relative error %.2e over 100 draws", worst)};
}

// Criterion 3
constexpr double recovery_radius = 1.0;  // px
constexpr double recovery_fraction = 0.96;

outcome refinement_recovery() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> shift(-20.0, 20.0);
    const auto sites = support::marker_grid();
    const image leader = support::render_markers(sites, support::marker_width, support::marker_height);
    int within = 0, total = 0;
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<Eigen::Vector2d> moved;
        std::vector<correspondence> start;
        for (std::size_t k = 0; k < sites.size(); ++k) {
            moved.push_back(sites[k] + Eigen::Vector2d(shift(rng), shift(rng)));
            start.push_back({sites[k], sites[k], 0, int(k)});
        }
        const image follower = support::render_markers(moved, support::marker_width, support::marker_height);
        const auto refined = refine_all(leader, follower, start);
        for (std::size_t k = 0; k < refined.size(); ++k) {
            within += (refined[k].c.p_f - moved[k]).norm() < recovery_radius;
            ++total;
        }
    }
    const double fraction = double(within) / total;
    return {fraction >= recovery_fraction, format("%d of %d within 1 px (%.1f%%)", within, total, 100.0 * fraction)};
}

// Criterion 4
constexpr int contrast_trials = 50;
constexpr int contrast_required = 49;
constexpr double contrast_noise = 1.0;  // px

outcome refinement_contrast() {
    int wins = 0;
    double raw_sum = 0.0, refined_sum = 0.0;
    for (int seed = 0; seed < contrast_trials; ++seed) {
        auto spec = two_view_scene_spec(4000 + seed);
        spec.noise_sigma = contrast_noise;
        const scene s = generate_scene(spec);
        const auto& left = s.views[0];
        const auto& right = s.views[1];
        const auto noisy = support::matches_between(s, false);
        try {
            const auto raw = reconstruct_two_view(noisy.matches, left.camera.camera, right.camera.camera);
            std::vector<correspondence> cs;
            for (const auto& m : noisy.matches) cs.push_back({m.left, m.right, 0, 0});
            std::vector<point_match> refined;
            for (const auto& r : refine_all(left.picture, right.picture, cs)) refined.push_back({r.c.p_l, r.c.p_f});
            const auto after = reconstruct_two_view(refined, left.camera.camera, right.camera.camera);
            wins += after.rms_after < raw.rms_after;
            raw_sum += raw.rms_after;
            refined_sum += after.rms_after;
        } catch (const error&) {
        }
    }
    return {wins >= contrast_required, format("%d of %d trials improved, mean rms %.3f -> %.3f px", wins,
                                              contrast_trials, raw_sum / contrast_trials,
                                              refined_sum / contrast_trials)};
}

// Criterion 5
constexpr int pnp_trials = 50;
constexpr int pnp_required = 48;
constexpr double pnp_rotation_deg = 0.5;
constexpr double pnp_translation_rel = 0.01;

outcome pnp_robustness() {
    int good = 0;
    double worst_rot = 0.0, worst_tr = 0.0;
    for (int seed = 0; seed < pnp_trials; ++seed) {
        const auto fx = support::make_pnp_fixture(5000 + seed, 20, 6, 0.5);
        try {
            const auto sol = solve_pnp_ransac(fx.problem);
            const double rot = support::rotation_error_deg(sol.pose, fx.truth);
            const double tr = support::translation_error_rel(sol.pose, fx.truth);
            worst_rot = std::max(worst_rot, rot);
            worst_tr = std::max(worst_tr, tr);
            good += rot < pnp_rotation_deg && tr < pnp_translation_rel;
        } catch (const error&) {
        }
    }
    return {good >= pnp_required,
            format("%d of %d within bounds, worst %.3f deg / %.2f%%", good, pnp_trials, worst_rot, 100.0 * worst_tr)};
}

// Criterion 6
constexpr double sfm_aligned_fraction = 0.01;
constexpr double sfm_epipolar_tolerance = 1e-6;  // px, square root of the Sampson distance

outcome two_view_sfm() {
    bool ok = true;
    double worst_fraction = 0.0, worst_epipolar = 0.0;
    for (std::uint64_t seed : {600, 601, 602}) {
        const scene s = generate_scene(two_view_scene_spec(seed));
        const auto exact = support::matches_between(s, true);
        const auto r = reconstruct_two_view(exact.matches, s.views[0].camera.camera, s.views[1].camera.camera);
        std::vector<Eigen::Vector3d> truth;
        for (std::size_t i = 0; i < exact.matches.size(); ++i) {
            if (r.inlier_mask[i]) truth.push_back(exact.joints[i]);
            worst_epipolar = std::max(worst_epipolar, std::sqrt(sampson_distance(r.F, exact.matches[i])));
        }
        ok &= truth.size() == exact.matches.size();
        worst_fraction = std::max(worst_fraction, support::aligned_rms(r.points, truth) / support::diameter(truth));
    }
    ok &= worst_fraction < sfm_aligned_fraction && worst_epipolar < sfm_epipolar_tolerance;
    return {ok, format("aligned rms %.2e of diameter, epipolar residual %.2e px", worst_fraction, worst_epipolar)};
}

// Criterion 7
constexpr int pipeline_trials = 50;
constexpr int pipeline_required = 45;
constexpr double pipeline_rotation_deg = 1.0;
constexpr double pipeline_translation_rel = 0.02;
constexpr double pipeline_noise = 1.0;     // px
constexpr double pipeline_dropout = 0.2;

outcome end_to_end() {
    int good = 0, failures = 0;
    for (int seed = 0; seed < pipeline_trials; ++seed) {
        auto spec = stereo_scene_spec(2, 7000 + seed);
        spec.noise_sigma = pipeline_noise;
        spec.dropout = pipeline_dropout;
        const scene s = generate_scene(spec);
        const auto frame_of = [&](const char* name) {
            const auto& v = s.view_named(name);
            return frame{v.picture, v.keypoints};
        };
        const rigid_transform truth =
            s.view_named("follower").camera.pose * s.view_named("leader_left").camera.pose.inverse();
        try {
            const auto r = run_pipeline(frame_of("leader_left"), frame_of("leader_right"), frame_of("follower"),
                                        scene_rig(s), s.view_named("follower").camera.camera);
            good += support::rotation_error_deg(r.solution.pose, truth) < pipeline_rotation_deg &&
                    support::translation_error_rel(r.solution.pose, truth) < pipeline_translation_rel;
        } catch (const error&) {
            ++failures;
        }
    }
    return {good >= pipeline_required,
            format("%d of %d within 1 deg and 2%%, %d stopped with an error", good, pipeline_trials, failures)};
}

// Criterion 8
constexpr double reid_auc_required = 0.95;

outcome reid_properties() {
    bool identity = true, permutation = true, monotone = true;
    std::vector<labeled_score> corpus;
    for (std::uint64_t seed = 800; seed < 820; ++seed) {
        auto spec = stereo_scene_spec(3, seed);
        spec.noise_sigma = 1.0;
        const scene s = generate_scene(spec);
        const auto& l = s.view_named("leader_left");

        for (const auto& a : associate(l.picture, l.keypoints, l.picture, l.keypoints))
            identity &= a.follower_index == a.leader_index;

        for (const char* other : {"leader_right", "follower"}) {
            const auto& o = s.view_named(other);
            const auto scores = score_matrix(l.picture, l.keypoints, o.picture, o.keypoints);
            const auto assoc = assign(scores);
            permutation &= assoc.size() == std::min(l.person_ids.size(), o.person_ids.size());
            for (const auto& a : assoc) permutation &= l.person_ids[a.leader_index] == o.person_ids[a.follower_index];

            std::set<std::pair<int, int>> previous;
            for (double t = -1.0; t <= 1.0 + 1e-12; t += 0.05) {
                std::set<std::pair<int, int>> current;
                for (const auto& a : assign(scores, {.delta_min = t})) current.insert({a.follower_index, a.leader_index});
                if (t > -1.0) monotone &= std::includes(previous.begin(), previous.end(), current.begin(), current.end());
                previous = current;
            }

            for (std::size_t f = 0; f < scores.size(); ++f)
                for (std::size_t k = 0; k < scores[f].size(); ++k) {
                    if (!std::isfinite(scores[f][k].score)) continue;
                    corpus.push_back({scores[f][k].score, l.person_ids[k] == o.person_ids[f]});
                }
        }
    }
    const double auc = roc_auc(corpus);
    return {identity && permutation && monotone && auc > reid_auc_required,
            format("identity %s, permutation %s, monotone %s, AUC %.4f over %zu pairs", identity ? "yes" : "no",
                   permutation ? "yes" : "no", monotone ? "yes" : "no", auc, corpus.size())};
}

// Criterion 9
constexpr double sync_window = 0.05;  // s

std::vector<matched_pair> replay(const std::vector<stamped_item>& items) {
    sync_buffer buffer({.window = sync_window});
    std::vector<matched_pair> out;
    for (const auto& it : items) {
        const auto got = buffer.push(it);
        out.insert(out.end(), got.begin(), got.end());
    }
    const auto rest = buffer.flush();
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

bool no_reuse(const std::vector<matched_pair>& pairs) {
    std::set<std::uint64_t> seen;
    for (const auto& p : pairs)
        if (!seen.insert(p.leader.payload).second || !seen.insert(p.follower.payload).second) return false;
    return true;
}

outcome sync_scheduler() {
    const auto items = support::scripted_schedule(900, 100);
    const auto expected = support::offline_matches(items, sync_window);
    const bool scripted = support::pair_stamps(replay(items)) == expected;
    std::mt19937_64 rng(901);
    int clean = 0, equal = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto pairs = replay(support::shuffle_streams(items, rng));
        clean += no_reuse(pairs);
        equal += support::pair_stamps(pairs) == expected;
    }
    return {scripted && clean == 1000,
            format("scripted %s (%zu pairs), %d of 1000 interleavings without reuse, %d equal to offline",
                   scripted ? "matches" : "differs", expected.size(), clean, equal)};
}

// Criterion 10
int run_cli(const std::string& args) {
    const std::string cmd = std::string(POSEKIT_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / ("posekit_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto in = [&](const std::string& name) { return (dir / "scene" / name).string(); };
    bool ok = run_cli("generate --scenario stereo --persons 2 --seed 10 --noise 1 --dropout 0.2 --out " +
                      (dir / "scene").string()) == 0;
    const auto full = [&](const std::string& out) {
        return run_cli("pipeline --leader-left " + in("leader_left.png") + " --leader-right " + in("leader_right.png") +
                       " --follower " + in("follower.png") + " --keypoints-leader-left " + in("leader_left.json") +
                       " --keypoints-leader-right " + in("leader_right.json") + " --keypoints-follower " +
                       in("follower.json") + " --calib-follower " + in("calib_follower.json") + " --rig " +
                       in("rig.json") + " --deterministic --out " + (dir / out).string());
    };
    ok &= full("a") == 0 && full("b") == 0;
    int identical = 0, files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        ++files;
        const std::string a = slurp(entry.path()), b = slurp(dir / "b" / entry.path().filename());
        identical += !a.empty() && a == b;
    }
    fs::remove_all(dir);
    ok &= files > 0 && identical == files;
    return {ok, format("%d of %d output files byte-identical", identical, files)};
}

struct criterion {
    int number;
    const char* name;
    double limit;  // seconds, infinity when unbounded
    std::function<outcome()> check;
};

}  // namespace

int main() {
    constexpr double unbounded = std::numeric_limits<double>::infinity();
    const std::vector<criterion> criteria{
        {1, "ssim correctness", 5.0, ssim_correctness},
        {2, "ssim gradient", 10.0, ssim_gradient},
        {3, "refinement recovery", 30.0, refinement_recovery},
        {4, "refinement contrast", unbounded, refinement_contrast},
        {5, "pnp robustness", 20.0, pnp_robustness},
        {6, "two-view sfm", 30.0, two_view_sfm},
        {7, "end-to-end pipeline", 120.0, end_to_end},
        {8, "reid properties", unbounded, reid_properties},
        {9, "sync scheduler", unbounded, sync_scheduler},
        {10, "determinism", unbounded, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("unexpected error: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = seconds < c.limit;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("criterion %d %s: %s (%s; %.1f s%s)\n", c.number, c.name, pass ? "PASS" : "FAIL", o.detail.c_str(),
                    seconds, in_time ? "" : ", over the time limit");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
