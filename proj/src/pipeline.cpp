#include "posekit/pipeline.hpp"

#include "posekit/error.hpp"
#include "posekit/sfm.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>

namespace posekit {

namespace {

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

class stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error(error_code::io, "cannot write " + path.string());
    out << text;
}

}  // namespace

std::vector<correspondence> mutual_correspondences(const keypoint_set& leader, const keypoint_set& other,
                                                   const std::vector<association>& associations) {
    std::vector<correspondence> out;
    for (const auto& a : associations) {
        if (a.leader_index < 0 || a.leader_index >= int(leader.persons.size()) || a.follower_index < 0 ||
            a.follower_index >= int(other.persons.size())) {
            throw error(error_code::precondition, "mutual_correspondences: association index out of range");
        }
        const auto& l = leader.persons[a.leader_index];
        const auto& f = other.persons[a.follower_index];
        for (int s = 0; s < keypoint_count; ++s) {
            if (l[s] && f[s]) out.push_back({*l[s], *f[s], a.leader_index, s});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const correspondence& a, const correspondence& b) {
        return std::pair(a.person, a.slot) < std::pair(b.person, b.slot);
    });
    return out;
}

triangulated_keypoints join_and_triangulate(const stereo_rig& rig, const std::vector<refined_correspondence>& stereo,
                                            const std::vector<refined_correspondence>& follower) {
    std::map<std::pair<int, int>, const refined_correspondence*> right;
    for (const auto& r : stereo) {
        if (r.flag == refine_flag::ok) right[{r.c.person, r.c.slot}] = &r;
    }
    std::vector<const refined_correspondence*> ordered;
    for (const auto& f : follower) {
        if (f.flag == refine_flag::ok && right.count({f.c.person, f.c.slot})) ordered.push_back(&f);
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return std::pair(a->c.person, a->c.slot) < std::pair(b->c.person, b->c.slot);
    });

    triangulated_keypoints out;
    for (const auto* f : ordered) {
        const auto* r = right.at({f->c.person, f->c.slot});
        Eigen::Vector3d X;
        try {
            X = triangulate_stereo(rig, r->c.p_l, r->c.p_f);
        } catch (const degenerate_rays_error&) {
            continue;
        }
        if (!(X.z() > 0.0) || !(rig.right_from_left(X).z() > 0.0)) continue;
        out.points.push_back(X);
        out.follower.push_back(f->c.p_f);
        out.person.push_back(f->c.person);
        out.slot.push_back(f->c.slot);
    }
    if (out.points.size() < 4) {
        throw error(error_code::geometry_degenerate,
                    "triangulation: only " + std::to_string(out.points.size()) + " keypoints triangulated, need 4");
    }
    return out;
}

pipeline_result run_pipeline(const frame& leader_left, const frame& leader_right, const frame& follower,
                             const stereo_rig& rig, const camera_model& follower_camera, const pipeline_config& cfg) {
    pipeline_result out;
    stopwatch clock;

    in_stage("sync", [&] {
        sync_buffer buffer(cfg.sync);
        buffer.push({leader_left.keypoints.timestamp, 0, stream::leader});
        auto pairs = buffer.push({follower.keypoints.timestamp, 1, stream::follower});
        const auto rest = buffer.flush();
        pairs.insert(pairs.end(), rest.begin(), rest.end());
        if (pairs.empty()) {
            throw error(error_code::no_association, "leader and follower frames are " +
                                                        std::to_string(std::abs(follower.keypoints.timestamp -
                                                                                leader_left.keypoints.timestamp)) +
                                                        " s apart, outside the sync window");
        }
        return 0;
    });
    out.timings["sync"] = clock.lap();

    in_stage("reid", [&] {
        out.follower_associations =
            associate(leader_left.picture, leader_left.keypoints, follower.picture, follower.keypoints, cfg.reid);
        out.stereo_associations = associate(leader_left.picture, leader_left.keypoints, leader_right.picture,
                                            leader_right.keypoints, cfg.reid);
        if (out.follower_associations.empty()) {
            throw error(error_code::no_association, "no follower person matches a leader person");
        }
        if (out.stereo_associations.empty()) {
            throw error(error_code::no_association, "no person matches across the leader stereo pair");
        }
        return 0;
    });
    out.timings["reid"] = clock.lap();

    in_stage("refine", [&] {
        const auto follower_corr =
            mutual_correspondences(leader_left.keypoints, follower.keypoints, out.follower_associations);
        const auto stereo_corr =
            mutual_correspondences(leader_left.keypoints, leader_right.keypoints, out.stereo_associations);
        if (follower_corr.empty() || stereo_corr.empty()) {
            throw error(error_code::no_association, "associated persons share no visible keypoint");
        }
        out.follower_refined = refine_all(leader_left.picture, follower.picture, follower_corr, cfg.refine);
        out.stereo_refined = refine_all(leader_left.picture, leader_right.picture, stereo_corr, cfg.refine);
        const auto ok = [](const std::vector<refined_correspondence>& v) {
            return std::count_if(v.begin(), v.end(), [](const auto& r) { return r.flag == refine_flag::ok; });
        };
        if (ok(out.follower_refined) < 4 || ok(out.stereo_refined) < 4) {
            throw error(error_code::refinement_degenerate, "fewer than 4 keypoints could be refined");
        }
        return 0;
    });
    out.timings["refine"] = clock.lap();

    out.triangulated = in_stage("triangulation", [&] {
        return join_and_triangulate(rig, out.stereo_refined, out.follower_refined);
    });
    out.timings["triangulation"] = clock.lap();

    out.solution = in_stage("pnp", [&] {
        const pnp_problem prob{out.triangulated.points, out.triangulated.follower, follower_camera};
        return solve_pnp_ransac(prob, cfg.ransac);
    });
    out.timings["pnp"] = clock.lap();
    return out;
}

nlohmann::json pose_report(const pipeline_result& result, bool deterministic) {
    nlohmann::json doc = to_json(result.solution);
    if (!deterministic) {
        doc["timings"] = result.timings;
        doc["generated_at"] = std::time(nullptr);
    }
    return doc;
}

nlohmann::json points_to_json(std::span<const Eigen::Vector3d> points) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : points) out.push_back({p.x(), p.y(), p.z()});
    return out;
}

nlohmann::json points_to_json(std::span<const Eigen::Vector2d> points) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : points) out.push_back({p.x(), p.y()});
    return out;
}

namespace {

template <int N>
std::vector<Eigen::Matrix<double, N, 1>> points_from_json(const nlohmann::json& doc) {
    const nlohmann::json& list = doc.is_object() && doc.contains("points") ? doc.at("points") : doc;
    if (!list.is_array()) throw error(error_code::parse, "point list: expected an array");
    std::vector<Eigen::Matrix<double, N, 1>> out;
    for (const auto& e : list) {
        if (!e.is_array() || e.size() != N) {
            throw error(error_code::parse, "point list: expected " + std::to_string(N) + " coordinates per point");
        }
        Eigen::Matrix<double, N, 1> p;
        for (int k = 0; k < N; ++k) {
            if (!e[k].is_number()) throw error(error_code::parse, "point list: non-numeric coordinate");
            p[k] = e[k].get<double>();
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace

std::vector<Eigen::Vector3d> points3d_from_json(const nlohmann::json& doc) {
    return points_from_json<3>(doc);
}

std::vector<Eigen::Vector2d> points2d_from_json(const nlohmann::json& doc) {
    return points_from_json<2>(doc);
}

void write_triangulation(const triangulated_keypoints& tri, const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    const fs::path dir(directory);
    write_file(dir / "points3d.json", points_to_json(tri.points).dump(2) + "\n");
    write_file(dir / "points2d.json", points_to_json(tri.follower).dump(2) + "\n");
    std::ofstream ply(dir / "points.ply", std::ios::binary);
    if (!ply) throw error(error_code::io, "cannot write points.ply");
    write_ply(ply, tri.points);
}

void write_pipeline_outputs(const pipeline_result& result, const std::string& directory, bool deterministic) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    const fs::path dir(directory);
    write_file(dir / "associations.json", to_json(result.follower_associations).dump(2) + "\n");
    write_file(dir / "stereo_associations.json", to_json(result.stereo_associations).dump(2) + "\n");
    write_file(dir / "refined.json", to_json(result.follower_refined).dump(2) + "\n");
    write_file(dir / "stereo_refined.json", to_json(result.stereo_refined).dump(2) + "\n");
    write_triangulation(result.triangulated, directory);
    write_file(dir / "pose.json", pose_report(result, deterministic).dump(2) + "\n");
}

}  // namespace posekit
