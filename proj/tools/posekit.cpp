#include "posekit/error.hpp"
#include "posekit/pipeline.hpp"
#include "posekit/scene.hpp"
#include "posekit/sfm.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace posekit;
namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error(error_code::parse, "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw error(error_code::parse, path + ": " + e.what());
    }
}

// Library readers report malformed content as parse errors; nlohmann access errors are folded in.
template <typename F>
auto parsing(const std::string& path, F&& body) {
    try {
        return body(read_json(path));
    } catch (const nlohmann::json::exception& e) {
        throw error(error_code::parse, path + ": " + e.what());
    } catch (const error& e) {
        if (e.code() == error_code::parse) throw error(error_code::parse, path + ": " + e.what());
        throw;
    }
}

keypoint_set read_keypoints(const std::string& path) {
    auto parsed = parsing(path, [](const nlohmann::json& doc) { return parse_keypoints(doc); });
    for (const auto& w : parsed.warnings) std::cerr << "posekit: " << path << ": warning: " << w << "\n";
    return parsed.set;
}

image read_image(const std::string& path) {
    try {
        return read_png(path);
    } catch (const error& e) {
        throw error(error_code::parse, e.what());
    }
}

camera_model read_camera(const std::string& path) {
    return parsing(path, [](const nlohmann::json& doc) { return camera_from_json(doc); });
}

void emit(const nlohmann::json& doc, const std::string& path) {
    const std::string text = doc.dump(2) + "\n";
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error(error_code::io, "cannot write " + path);
    out << text;
}

struct generate_args {
    std::string scenario = "stereo";
    int persons = 2;
    std::uint64_t seed = 0;
    double noise = 0.0;
    double outliers = 0.0;
    double dropout = 0.0;
    std::string out;
};

struct pair_args {
    std::string leader, follower, keypoints_leader, keypoints_follower;
    std::string associations;
    double delta_min = reid_config{}.delta_min;
    std::string out;
};

struct triangulate_args {
    std::string rig, stereo_refined, follower_refined, out;
};

struct pnp_args {
    std::string points3d, points2d, calib, out;
    std::uint64_t seed = 0;
    double threshold = ransac_config{}.inlier_threshold;
};

struct sfm_args {
    std::string matches, left, right, keypoints_left, keypoints_right, calib_left, calib_right, out;
    bool refine = false;
    std::uint64_t seed = 0;
    double threshold = 1.0;
};

struct replay_args {
    std::string schedule, out, policy = "exact";
    double window = sync_config{}.window;
    std::size_t capacity = sync_config{}.buffer_capacity;
};

struct pipeline_args {
    std::string leader_left, leader_right, follower;
    std::string keypoints_leader_left, keypoints_leader_right, keypoints_follower;
    std::string calib_follower, rig, out;
    std::uint64_t seed = 0;
    double window = sync_config{}.window;
    bool deterministic = false;
};

int run_generate(const generate_args& a) {
    scene_spec spec;
    if (a.scenario == "stereo") {
        spec = stereo_scene_spec(a.persons, a.seed);
    } else if (a.scenario == "nine") {
        spec = two_view_scene_spec(a.seed);
    } else {
        throw error(error_code::precondition, "unknown scenario " + a.scenario);
    }
    spec.noise_sigma = a.noise;
    spec.outlier_fraction = a.outliers;
    spec.dropout = a.dropout;
    write_scene(generate_scene(spec), a.out);
    return 0;
}

int run_reid(const pair_args& a) {
    reid_config cfg;
    cfg.delta_min = a.delta_min;
    const auto assoc = associate(read_image(a.leader), read_keypoints(a.keypoints_leader), read_image(a.follower),
                                 read_keypoints(a.keypoints_follower), cfg);
    emit(to_json(assoc), a.out);
    if (assoc.empty()) throw error(error_code::no_association, "no follower person matches a leader person");
    return 0;
}

int run_refine(const pair_args& a) {
    const image leader = read_image(a.leader), follower = read_image(a.follower);
    const keypoint_set kl = read_keypoints(a.keypoints_leader), kf = read_keypoints(a.keypoints_follower);
    std::vector<association> assoc;
    if (a.associations.empty()) {
        reid_config cfg;
        cfg.delta_min = a.delta_min;
        assoc = associate(leader, kl, follower, kf, cfg);
    } else {
        assoc = parsing(a.associations, [](const nlohmann::json& doc) { return associations_from_json(doc); });
    }
    const auto corr = mutual_correspondences(kl, kf, assoc);
    if (corr.empty()) throw error(error_code::no_association, "associated persons share no visible keypoint");
    emit(to_json(refine_all(leader, follower, corr)), a.out);
    return 0;
}

int run_triangulate(const triangulate_args& a) {
    const stereo_rig rig = parsing(a.rig, [](const nlohmann::json& doc) { return rig_from_json(doc); });
    const auto read_refined = [](const std::string& path) {
        return parsing(path, [](const nlohmann::json& doc) { return refined_from_json(doc); });
    };
    write_triangulation(join_and_triangulate(rig, read_refined(a.stereo_refined), read_refined(a.follower_refined)),
                        a.out);
    return 0;
}

int run_pnp(const pnp_args& a) {
    pnp_problem prob;
    prob.points3d = parsing(a.points3d, [](const nlohmann::json& doc) { return points3d_from_json(doc); });
    prob.points2d = parsing(a.points2d, [](const nlohmann::json& doc) { return points2d_from_json(doc); });
    prob.camera = read_camera(a.calib);
    ransac_config cfg;
    cfg.rng_seed = a.seed;
    cfg.inlier_threshold = a.threshold;
    emit(to_json(solve_pnp_ransac(prob, cfg)), a.out);
    return 0;
}

std::vector<point_match> matches_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw error(error_code::parse, "matches: expected an array");
    std::vector<point_match> out;
    for (const auto& m : doc) {
        out.push_back({{m.at("left").at(0).get<double>(), m.at("left").at(1).get<double>()},
                       {m.at("right").at(0).get<double>(), m.at("right").at(1).get<double>()}});
    }
    return out;
}

int run_sfm(const sfm_args& a) {
    const camera_model left = read_camera(a.calib_left), right = read_camera(a.calib_right);
    std::vector<point_match> matches;
    if (!a.matches.empty()) {
        matches = parsing(a.matches, matches_from_json);
    } else {
        if (a.left.empty() || a.right.empty() || a.keypoints_left.empty() || a.keypoints_right.empty()) {
            throw error(error_code::precondition, "sfm needs --matches or both images and keypoint files");
        }
        const image img_l = read_image(a.left), img_r = read_image(a.right);
        const keypoint_set kl = read_keypoints(a.keypoints_left), kr = read_keypoints(a.keypoints_right);
        const auto assoc = associate(img_l, kl, img_r, kr);
        if (assoc.empty()) throw error(error_code::no_association, "no person matches across the two views");
        const auto corr = mutual_correspondences(kl, kr, assoc);
        if (a.refine) {
            for (const auto& r : refine_all(img_l, img_r, corr)) {
                if (r.flag == refine_flag::ok) matches.push_back({r.c.p_l, r.c.p_f});
            }
        } else {
            for (const auto& c : corr) matches.push_back({c.p_l, c.p_f});
        }
    }
    ransac_config cfg;
    cfg.rng_seed = a.seed;
    cfg.inlier_threshold = a.threshold;
    const auto rec = reconstruct_two_view(matches, left, right, cfg);

    fs::create_directories(a.out);
    nlohmann::json report = to_json(rec.pose);
    report["rms_before"] = rec.rms_before;
    report["rms_after"] = rec.rms_after;
    nlohmann::json inliers = nlohmann::json::array();
    for (std::size_t i = 0; i < rec.inlier_mask.size(); ++i) {
        if (rec.inlier_mask[i]) inliers.push_back(i);
    }
    report["inliers"] = inliers;
    emit(report, (fs::path(a.out) / "pose.json").string());
    std::ofstream ply(fs::path(a.out) / "points.ply", std::ios::binary);
    if (!ply) throw error(error_code::io, "cannot write points.ply");
    write_ply(ply, rec.points);
    return 0;
}

int run_sync_replay(const replay_args& a) {
    sync_config cfg;
    cfg.window = a.window;
    cfg.buffer_capacity = a.capacity;
    if (a.policy == "exact") {
        cfg.policy = sync_policy::exact;
    } else if (a.policy == "eager") {
        cfg.policy = sync_policy::eager;
    } else {
        throw error(error_code::precondition, "unknown sync policy " + a.policy);
    }
    const auto items = parsing(a.schedule, [](const nlohmann::json& doc) {
        if (!doc.is_array()) throw error(error_code::parse, "schedule: expected an array");
        std::vector<stamped_item> out;
        for (const auto& e : doc) {
            const auto source = e.at("source").get<std::string>();
            if (source != "leader" && source != "follower") {
                throw error(error_code::parse, "schedule: unknown source " + source);
            }
            out.push_back({e.at("timestamp").get<double>(), e.value("payload", std::uint64_t{0}),
                           source == "leader" ? stream::leader : stream::follower});
        }
        return out;
    });

    sync_buffer buffer(cfg);
    nlohmann::json pairs = nlohmann::json::array();
    const auto record = [&](const std::vector<matched_pair>& emitted) {
        for (const auto& p : emitted) {
            pairs.push_back({{"leader", {{"timestamp", p.leader.timestamp}, {"payload", p.leader.payload}}},
                             {"follower", {{"timestamp", p.follower.timestamp}, {"payload", p.follower.payload}}},
                             {"gap", p.gap()}});
        }
    };
    for (const auto& item : items) record(buffer.push(item));
    record(buffer.flush());
    emit(pairs, a.out);
    return 0;
}

frame read_frame(const std::string& picture, const std::string& keypoints) {
    return {read_image(picture), read_keypoints(keypoints)};
}

int run_pipeline_command(const pipeline_args& a) {
    const stereo_rig rig = parsing(a.rig, [](const nlohmann::json& doc) { return rig_from_json(doc); });
    const camera_model follower_camera = read_camera(a.calib_follower);
    const frame ll = read_frame(a.leader_left, a.keypoints_leader_left);
    const frame lr = read_frame(a.leader_right, a.keypoints_leader_right);
    const frame f = read_frame(a.follower, a.keypoints_follower);
    pipeline_config cfg;
    cfg.ransac.rng_seed = a.seed;
    cfg.sync.window = a.window;
    const auto result = run_pipeline(ll, lr, f, rig, follower_camera, cfg);
    write_pipeline_outputs(result, a.out, a.deterministic);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relative pose between two robots from mutually observed human keypoints"};
    app.require_subcommand(1);
    app.fallthrough(false);

    generate_args gen;
    auto* generate = app.add_subcommand("generate", "Render a synthetic scene with keypoints and ground truth");
    generate->add_option("--scenario", gen.scenario, "stereo (leader pair + follower) or nine (two-view group)")
        ->check(CLI::IsMember({"stereo", "nine"}));
    generate->add_option("--persons", gen.persons, "Persons in a stereo scene");
    generate->add_option("--seed", gen.seed);
    generate->add_option("--noise", gen.noise, "Keypoint noise sigma, px");
    generate->add_option("--outliers", gen.outliers, "Fraction of keypoints replaced by random pixels");
    generate->add_option("--dropout", gen.dropout, "Fraction of keypoints reported missing");
    generate->add_option("--out", gen.out)->required();

    pair_args reid_a;
    auto* reid = app.add_subcommand("reid", "Associate persons between a leader and a follower image");
    reid->add_option("--leader", reid_a.leader)->required();
    reid->add_option("--follower", reid_a.follower)->required();
    reid->add_option("--keypoints-leader", reid_a.keypoints_leader)->required();
    reid->add_option("--keypoints-follower", reid_a.keypoints_follower)->required();
    reid->add_option("--delta-min", reid_a.delta_min, "Minimum association score");
    reid->add_option("--out", reid_a.out, "Output file, stdout when omitted");

    pair_args refine_a;
    auto* refine = app.add_subcommand("refine", "Refine follower keypoints of associated persons");
    refine->add_option("--leader", refine_a.leader)->required();
    refine->add_option("--follower", refine_a.follower)->required();
    refine->add_option("--keypoints-leader", refine_a.keypoints_leader)->required();
    refine->add_option("--keypoints-follower", refine_a.keypoints_follower)->required();
    refine->add_option("--associations", refine_a.associations, "Association report; re-identified when omitted");
    refine->add_option("--delta-min", refine_a.delta_min);
    refine->add_option("--out", refine_a.out);

    triangulate_args tri_a;
    auto* triangulate = app.add_subcommand("triangulate", "Triangulate refined keypoints with the leader rig");
    triangulate->add_option("--rig", tri_a.rig)->required();
    triangulate->add_option("--stereo-refined", tri_a.stereo_refined)->required();
    triangulate->add_option("--follower-refined", tri_a.follower_refined)->required();
    triangulate->add_option("--out", tri_a.out, "Output directory")->required();

    pnp_args pnp_a;
    auto* pnp = app.add_subcommand("pnp", "Follower pose from 3D-2D correspondences");
    pnp->add_option("--points3d", pnp_a.points3d)->required();
    pnp->add_option("--points2d", pnp_a.points2d)->required();
    pnp->add_option("--calib", pnp_a.calib)->required();
    pnp->add_option("--seed", pnp_a.seed);
    pnp->add_option("--threshold", pnp_a.threshold, "Inlier threshold, px");
    pnp->add_option("--out", pnp_a.out);

    sfm_args sfm_a;
    auto* sfm = app.add_subcommand("sfm", "Two-view reconstruction");
    sfm->add_option("--matches", sfm_a.matches, "JSON list of {left: [x, y], right: [x, y]}");
    sfm->add_option("--left", sfm_a.left);
    sfm->add_option("--right", sfm_a.right);
    sfm->add_option("--keypoints-left", sfm_a.keypoints_left);
    sfm->add_option("--keypoints-right", sfm_a.keypoints_right);
    sfm->add_option("--calib-left", sfm_a.calib_left)->required();
    sfm->add_option("--calib-right", sfm_a.calib_right)->required();
    sfm->add_flag("--refine", sfm_a.refine, "Refine keypoint matches before reconstruction");
    sfm->add_option("--seed", sfm_a.seed);
    sfm->add_option("--threshold", sfm_a.threshold, "Sampson inlier threshold, px");
    sfm->add_option("--out", sfm_a.out, "Output directory")->required();

    replay_args replay_a;
    auto* replay = app.add_subcommand("sync-replay", "Replay a timestamp schedule through the sync buffer");
    replay->add_option("--schedule", replay_a.schedule, "JSON list of {timestamp, source, payload}")->required();
    replay->add_option("--window", replay_a.window);
    replay->add_option("--capacity", replay_a.capacity);
    replay->add_option("--policy", replay_a.policy)->check(CLI::IsMember({"exact", "eager"}));
    replay->add_option("--out", replay_a.out);

    pipeline_args pipe_a;
    auto* pipeline = app.add_subcommand("pipeline", "Full leader-stereo to follower pose estimation");
    pipeline->add_option("--leader-left", pipe_a.leader_left)->required();
    pipeline->add_option("--leader-right", pipe_a.leader_right)->required();
    pipeline->add_option("--follower", pipe_a.follower)->required();
    pipeline->add_option("--keypoints-leader-left", pipe_a.keypoints_leader_left)->required();
    pipeline->add_option("--keypoints-leader-right", pipe_a.keypoints_leader_right)->required();
    pipeline->add_option("--keypoints-follower", pipe_a.keypoints_follower)->required();
    pipeline->add_option("--calib-follower", pipe_a.calib_follower)->required();
    pipeline->add_option("--rig", pipe_a.rig)->required();
    pipeline->add_option("--seed", pipe_a.seed);
    pipeline->add_option("--window", pipe_a.window, "Sync window, s");
    pipeline->add_option("--out", pipe_a.out, "Output directory")->required();
    pipeline->add_flag("--deterministic", pipe_a.deterministic, "Omit timings and generation time");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "posekit: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*generate) return run_generate(gen);
        if (*reid) return run_reid(reid_a);
        if (*refine) return run_refine(refine_a);
        if (*triangulate) return run_triangulate(tri_a);
        if (*pnp) return run_pnp(pnp_a);
        if (*sfm) return run_sfm(sfm_a);
        if (*replay) return run_sync_replay(replay_a);
        if (*pipeline) return run_pipeline_command(pipe_a);
    } catch (const stage_error& e) {
        std::cerr << "posekit: stage " << e.stage() << " failed [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return exit_status(e.code());
    } catch (const error& e) {
        std::cerr << "posekit: error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return exit_status(e.code());
    } catch (const std::exception& e) {
        std::cerr << "posekit: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
