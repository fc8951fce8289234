#include "posekit/scene.hpp"

#include "posekit/error.hpp"
#include "posekit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace posekit {

namespace {

constexpr double wall_z = 11.0;   // background wall, level frame
constexpr double texel_size = 0.004;
constexpr double billboard_margin = 0.13;

// Standing pose for a 1.7 m person facing the camera; u to the camera's right, v up.
constexpr std::array<std::array<double, 2>, keypoint_count> joint_template = {{
    {0.0, 1.58},     // nose
    {0.0, 1.44},     // neck
    {-0.19, 1.41},   // right shoulder
    {-0.27, 1.13},   // right elbow
    {-0.31, 0.87},   // right wrist
    {0.19, 1.41},    // left shoulder
    {0.27, 1.13},    // left elbow
    {0.31, 0.87},    // left wrist
    {-0.10, 0.93},   // right hip
    {-0.12, 0.50},   // right knee
    {-0.13, 0.08},   // right ankle
    {0.10, 0.93},    // left hip
    {0.12, 0.50},    // left knee
    {0.13, 0.08},    // left ankle
    {-0.035, 1.625}, // right eye
    {0.035, 1.625},  // left eye
    {-0.075, 1.60},  // right ear
    {0.075, 1.60},   // left ear
}};

struct blob {
    Eigen::Vector2d center;
    double sigma;
    Eigen::Vector3d amplitude;
};

void paint(image& tex, double texel, const blob& b) {
    const double reach = 3.5 * b.sigma;
    const int x0 = std::max(0, int(std::floor((b.center.x() - reach) / texel)));
    const int x1 = std::min(tex.width() - 1, int(std::ceil((b.center.x() + reach) / texel)));
    const int y0 = std::max(0, int(std::floor((b.center.y() - reach) / texel)));
    const int y1 = std::min(tex.height() - 1, int(std::ceil((b.center.y() + reach) / texel)));
    const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (Eigen::Vector2d(x * texel, y * texel) - b.center).squaredNorm();
            const double w = std::exp(-d2 * inv);
            for (int c = 0; c < 3; ++c) tex.at(x, y, c) += w * b.amplitude(c);
        }
    }
}

// Texture coordinates: texel (i, j) sits at u = -half_width + i * texel, v = j * texel.
// Clothing-like layout: a shirt and a trouser color, large soft patches, then fine detail and
// the keypoint markers.
image person_texture(const person_instance& p, std::mt19937_64& rng) {
    const int w = int(std::ceil(2.0 * p.half_width / p.texel)) + 1;
    const int h = int(std::ceil(p.height / p.texel)) + 1;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto color = [&] { return Eigen::Vector3d(50 + 150 * unit(rng), 50 + 150 * unit(rng), 50 + 150 * unit(rng)); };
    const Eigen::Vector3d shirt = color();
    const Eigen::Vector3d trousers = color();
    const double waist = 0.5 * (p.joints_plane[right_hip].y() + p.joints_plane[left_hip].y());
    image tex(w, h, 3);
    for (int y = 0; y < h; ++y) {
        const double t = std::clamp((y * p.texel - waist) / 0.08 + 0.5, 0.0, 1.0);
        const Eigen::Vector3d base = (1.0 - t) * trousers + t * shirt;
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) tex.at(x, y, c) = base(c);
        }
    }
    const Eigen::Vector2d shift(p.half_width, 0.0);
    const auto scatter = [&](int count, double sigma_lo, double sigma_hi, double amplitude) {
        for (int k = 0; k < count; ++k) {
            blob b;
            b.center = Eigen::Vector2d(unit(rng) * 2.0 * p.half_width, unit(rng) * p.height);
            b.sigma = sigma_lo + (sigma_hi - sigma_lo) * unit(rng);
            b.amplitude = Eigen::Vector3d(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5) * 2.0 * amplitude;
            paint(tex, p.texel, b);
        }
    };
    scatter(12, 0.08, 0.16, 80.0);
    scatter(50, 0.015, 0.05, 70.0);
    // keypoint markers
    for (int s = 0; s < keypoint_count; ++s) {
        const double sign = (s % 2 == 0) ? 1.0 : -1.0;
        blob b{p.joints_plane[s] + shift, 0.018, Eigen::Vector3d(unit(rng), unit(rng), unit(rng)) * 40.0 +
                                                     Eigen::Vector3d::Constant(sign * 70.0)};
        paint(tex, p.texel, b);
    }
    for (auto& v : tex.data()) v = std::clamp(v, 0.0, 255.0);
    return tex;
}

struct wall_pattern {
    std::array<Eigen::Vector3d, 3> phase;
    rigid_transform level_from_world;
    Eigen::Vector3d sample(double x, double y) const {
        Eigen::Vector3d out;
        for (int c = 0; c < 3; ++c) {
            out(c) = 120.0 + 28.0 * std::sin(1.7 * x + 0.9 * y + phase[c](0)) +
                     20.0 * std::sin(-0.8 * x + 2.3 * y + phase[c](1)) + 12.0 * std::sin(3.9 * x - 3.1 * y + phase[c](2));
        }
        return out;
    }
};

struct ray_hit {
    double depth = std::numeric_limits<double>::infinity();
    int person = -1;
    Eigen::Vector2d uv;
};

ray_hit cast(const std::vector<person_instance>& persons, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
    ray_hit best;
    for (std::size_t i = 0; i < persons.size(); ++i) {
        const auto& p = persons[i];
        const Eigen::Vector3d n = p.normal();
        const double denom = n.dot(dir);
        if (std::abs(denom) < 1e-12) continue;
        const double s = n.dot(p.origin - origin) / denom;
        if (!(s > 0.0) || s >= best.depth) continue;
        const Eigen::Vector3d rel = origin + s * dir - p.origin;
        const double u = rel.dot(p.u_axis);
        const double v = rel.dot(p.v_axis);
        if (std::abs(u) > p.half_width || v < 0.0 || v > p.height) continue;
        best = {s, int(i), Eigen::Vector2d(u, v)};
    }
    return best;
}

Eigen::Vector3d shade(const std::vector<person_instance>& persons, const wall_pattern& wall,
                      const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
    const auto hit = cast(persons, origin, dir);
    if (hit.person >= 0) {
        const auto& p = persons[hit.person];
        const double tx = std::clamp((hit.uv.x() + p.half_width) / p.texel, 0.0, double(p.texture.width() - 1));
        const double ty = std::clamp(hit.uv.y() / p.texel, 0.0, double(p.texture.height() - 1));
        Eigen::Vector3d out;
        for (int c = 0; c < 3; ++c) out(c) = sample_value(p.texture, tx, ty, c);
        return out;
    }
    const Eigen::Vector3d o = wall.level_from_world(origin);
    const Eigen::Vector3d d = wall.level_from_world.rotation * dir;
    if (d.z() > 1e-9) {
        const Eigen::Vector3d on_wall = o + (wall_z - o.z()) / d.z() * d;
        return wall.sample(on_wall.x(), on_wall.y());
    }
    return Eigen::Vector3d::Constant(128.0);
}

image render(const std::vector<person_instance>& persons, const wall_pattern& wall, const scene_camera& cam) {
    const auto& K = cam.camera;
    image out(K.width, K.height, 3);
    const Eigen::Matrix3d world_from_cam = cam.pose.rotation.transpose();
    const Eigen::Vector3d center = -world_from_cam * cam.pose.translation;
    parallel_for(std::size_t(K.height), [&](std::size_t row) {
        const int y = int(row);
        for (int x = 0; x < K.width; ++x) {
            Eigen::Vector3d acc = Eigen::Vector3d::Zero();
            for (double dy : {-0.25, 0.25}) {
                for (double dx : {-0.25, 0.25}) {
                    const Eigen::Vector2d xy = K.normalize(Eigen::Vector2d(x + dx, y + dy));
                    const Eigen::Vector3d dir = (world_from_cam * xy.homogeneous()).normalized();
                    acc += shade(persons, wall, center, dir);
                }
            }
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = acc(c) / 4.0;
        }
    });
    return quantize(out);
}

bool joint_visible(const std::vector<person_instance>& persons, int person, int slot, const scene_camera& cam,
                   Eigen::Vector2d& pixel) {
    const Eigen::Vector3d X = persons[person].joint(slot);
    const Eigen::Vector3d xc = cam.pose(X);
    if (!(xc.z() > 0.0)) return false;
    pixel = cam.camera.denormalize(xc.head<2>() / xc.z());
    if (pixel.x() < 0.0 || pixel.y() < 0.0 || pixel.x() > cam.camera.width - 1 || pixel.y() > cam.camera.height - 1) {
        return false;
    }
    const Eigen::Vector3d center = -cam.pose.rotation.transpose() * cam.pose.translation;
    const Eigen::Vector3d dir = (X - center).normalized();
    const auto hit = cast(persons, center, dir);
    return hit.person == person;
}

std::vector<person_instance> place_persons(const scene_spec& spec, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<person_instance> out;
    const int per_row = 3;
    const int rows = (spec.persons + per_row - 1) / per_row;
    const std::array<double, 3> row_offset = {0.0, 0.65, 0.0};
    const rigid_transform to_world = world_from_level(spec.camera_pitch);
    int id = 0;
    for (int r = 0; r < rows; ++r) {
        const int in_row = std::min(per_row, spec.persons - r * per_row);
        for (int i = 0; i < in_row; ++i, ++id) {
            person_instance p;
            p.id = id;
            const double scale = spec.skeleton_scale / 1.7 * (1.0 + 0.06 * unit(rng));
            const double spacing = in_row <= 2 ? 1.8 : 1.3;
            const double x = (i - (in_row - 1) / 2.0) * spacing + row_offset[r % 3] + 0.12 * unit(rng);
            const double z = 3.4 + 0.9 * r + 0.25 * unit(rng);
            // people turn toward the cameras on average
            Eigen::Vector3d toward = Eigen::Vector3d::Zero();
            for (const auto& cam : spec.cameras) {
                const Eigen::Vector3d c = to_world.inverse()(-cam.pose.rotation.transpose() * cam.pose.translation);
                toward += (c - Eigen::Vector3d(x, c.y(), z)).normalized();
            }
            const double yaw = std::atan2(-toward.x(), -toward.z()) + 0.06 * unit(rng);
            // the billboard reaches below the floor so ankle patches stay on the person
            p.origin = to_world(Eigen::Vector3d(x, spec.camera_height + billboard_margin, z));
            p.u_axis = to_world.rotation * Eigen::Vector3d(std::cos(yaw), 0.0, -std::sin(yaw));
            p.v_axis = to_world.rotation * Eigen::Vector3d(0.0, -1.0, 0.0);
            double reach = 0.0, top = 0.0;
            for (int s = 0; s < keypoint_count; ++s) {
                Eigen::Vector2d j(joint_template[s][0], joint_template[s][1]);
                if (s != nose && s != neck && s < right_eye) j += Eigen::Vector2d(unit(rng), unit(rng)) * 0.035;
                p.joints_plane[s] = j * scale + Eigen::Vector2d(0.0, billboard_margin);
                reach = std::max(reach, std::abs(p.joints_plane[s].x()));
                top = std::max(top, p.joints_plane[s].y());
            }
            p.half_width = reach + billboard_margin;
            p.height = top + billboard_margin;
            p.texel = texel_size;
            out.push_back(std::move(p));
        }
    }
    return out;
}

// Stable order of persons by mean x, then mean y, of their visible keypoints.
std::vector<std::size_t> left_to_right(const std::vector<skeleton>& persons) {
    const auto mean = [](const skeleton& s) {
        Eigen::Vector2d m = Eigen::Vector2d::Zero();
        int n = 0;
        for (const auto& k : s) {
            if (k) {
                m += *k;
                ++n;
            }
        }
        return n ? Eigen::Vector2d(m / n) : m;
    };
    std::vector<std::size_t> order(persons.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ma = mean(persons[a]);
        const auto mb = mean(persons[b]);
        if (ma.x() != mb.x()) return ma.x() < mb.x();
        return ma.y() < mb.y();
    });
    return order;
}

nlohmann::json vec_json(const Eigen::Vector3d& v) {
    return {v.x(), v.y(), v.z()};
}

}  // namespace

Eigen::Vector3d person_instance::joint(int slot) const {
    return at(joints_plane[slot].x(), joints_plane[slot].y());
}

const scene_view& scene::view_named(const std::string& name) const {
    for (const auto& v : views) {
        if (v.camera.name == name) return v;
    }
    throw error(error_code::precondition, "scene: no view named " + name);
}

camera_model synthetic_camera() {
    return {synthetic_focal, synthetic_focal, (synthetic_width - 1) / 2.0, (synthetic_height - 1) / 2.0,
            synthetic_width, synthetic_height};
}

rigid_transform camera_looking(const Eigen::Vector3d& center, double yaw, double pitch) {
    Eigen::Matrix3d level_from_cam;
    level_from_cam.col(0) = Eigen::Vector3d(std::cos(yaw), 0.0, -std::sin(yaw));
    level_from_cam.col(1) = Eigen::Vector3d(0.0, 1.0, 0.0);
    level_from_cam.col(2) = Eigen::Vector3d(std::sin(yaw), 0.0, std::cos(yaw));
    rigid_transform pose;
    pose.rotation = Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()).toRotationMatrix() * level_from_cam.transpose();
    pose.translation = -pose.rotation * center;
    return pose;
}

rigid_transform world_from_level(double pitch) {
    return {Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()).toRotationMatrix(), Eigen::Vector3d::Zero()};
}

scene_spec stereo_scene_spec(int persons, std::uint64_t seed) {
    scene_spec spec;
    spec.persons = persons;
    spec.seed = seed;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const auto cam = synthetic_camera();
    spec.cameras.push_back({"leader_left", cam, rigid_transform::identity(), 1.0});
    spec.cameras.push_back({"leader_right", cam, camera_looking({leader_baseline, 0.0, 0.0}, 0.0), 1.0});

    const double side = unit(rng) < 0.0 ? -1.0 : 1.0;
    const Eigen::Vector3d center(side * (0.8 + 0.2 * unit(rng)), 0.1 * unit(rng), 0.2 + 0.2 * unit(rng));
    const Eigen::Vector3d target(0.0, 0.0, 3.6);
    const double yaw = std::atan2(target.x() - center.x(), target.z() - center.z()) + 0.04 * unit(rng);
    rigid_transform follower = camera_looking(center, yaw);
    // slight roll and pitch so the pose is not planar
    follower.rotation = so3_exp(Eigen::Vector3d(0.03 * unit(rng), 0.0, 0.03 * unit(rng))) * follower.rotation;
    follower.translation = -follower.rotation * center;
    spec.cameras.push_back({"follower", cam, follower, 1.0 + 0.012});
    return spec;
}

scene_spec two_view_scene_spec(std::uint64_t seed) {
    scene_spec spec;
    spec.persons = 9;
    spec.seed = seed;
    const auto cam = synthetic_camera();
    spec.camera_height = 2.4;
    spec.camera_pitch = 0.38;
    spec.cameras.push_back({"view1", cam, rigid_transform::identity(), 0.0});
    const Eigen::Vector3d center(0.8, 0.0, 0.2);
    const rigid_transform level_from_world = world_from_level(spec.camera_pitch).inverse();
    spec.cameras.push_back(
        {"view2", cam, camera_looking(center, std::atan2(-0.8, 4.2), spec.camera_pitch) * level_from_world, 0.0});
    return spec;
}

stereo_rig scene_rig(const scene& s) {
    const auto& l = s.view_named("leader_left").camera;
    const auto& r = s.view_named("leader_right").camera;
    return {l.camera, r.camera, r.pose * l.pose.inverse()};
}

scene generate_scene(const scene_spec& spec) {
    if (spec.persons < 1 || !(spec.noise_sigma >= 0.0) || spec.cameras.empty() || !(spec.skeleton_scale > 0.0) ||
        !(spec.dropout >= 0.0 && spec.dropout <= 1.0) || !(spec.outlier_fraction >= 0.0 && spec.outlier_fraction <= 1.0)) {
        throw error(error_code::precondition, "generate_scene: invalid scene spec");
    }
    scene out;
    out.spec = spec;
    std::mt19937_64 rng(spec.seed);
    out.persons = place_persons(spec, rng);
    for (auto& p : out.persons) p.texture = person_texture(p, rng);
    std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
    wall_pattern wall;
    for (auto& ph : wall.phase) ph = Eigen::Vector3d(phase(rng), phase(rng), phase(rng));
    wall.level_from_world = world_from_level(spec.camera_pitch).inverse();

    for (const auto& cam : spec.cameras) {
        scene_view v;
        v.camera = cam;
        v.picture = render(out.persons, wall, cam);

        std::vector<skeleton> reported, exact;
        std::vector<int> ids;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, 1.0);
        for (std::size_t p = 0; p < out.persons.size(); ++p) {
            skeleton rep, ex;
            for (int s = 0; s < keypoint_count; ++s) {
                Eigen::Vector2d px;
                if (!joint_visible(out.persons, int(p), s, cam, px)) continue;
                ex[s] = px;
                const double drop = unit(rng);
                const double outlier = unit(rng);
                const Eigen::Vector2d jitter(noise(rng), noise(rng));
                const Eigen::Vector2d anywhere(unit(rng) * (cam.camera.width - 1), unit(rng) * (cam.camera.height - 1));
                if (drop < spec.dropout) continue;
                Eigen::Vector2d q = outlier < spec.outlier_fraction ? anywhere : Eigen::Vector2d(px + spec.noise_sigma * jitter);
                if (q.x() < 0.0 || q.y() < 0.0 || q.x() > cam.camera.width - 1 || q.y() > cam.camera.height - 1) continue;
                rep[s] = q;
            }
            if (visible_count(rep) == 0) continue;
            reported.push_back(rep);
            exact.push_back(ex);
            ids.push_back(int(p));
        }
        const auto order = left_to_right(reported);
        v.keypoints.image = cam.name + ".png";
        v.keypoints.width = cam.camera.width;
        v.keypoints.height = cam.camera.height;
        v.keypoints.timestamp = cam.timestamp;
        for (auto k : order) {
            v.keypoints.persons.push_back(reported[k]);
            v.exact.push_back(exact[k]);
            v.person_ids.push_back(ids[k]);
        }
        out.views.push_back(std::move(v));
    }
    return out;
}

nlohmann::json ground_truth_json(const scene& s) {
    nlohmann::json persons = nlohmann::json::array();
    for (const auto& p : s.persons) {
        nlohmann::json joints = nlohmann::json::array();
        for (int k = 0; k < keypoint_count; ++k) joints.push_back(vec_json(p.joint(k)));
        persons.push_back({{"id", p.id}, {"joints", joints}});
    }
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : s.views) {
        nlohmann::json pose = to_json(v.camera.pose);
        views.push_back({{"name", v.camera.name},
                         {"camera_from_world", pose},
                         {"timestamp", v.camera.timestamp},
                         {"person_ids", v.person_ids}});
    }
    nlohmann::json doc = {{"seed", s.spec.seed}, {"persons", persons}, {"views", views}};
    const auto named = [&](const std::string& n) {
        return std::any_of(s.views.begin(), s.views.end(), [&](const scene_view& v) { return v.camera.name == n; });
    };
    if (named("leader_left") && named("follower")) {
        const auto& l = s.view_named("leader_left").camera.pose;
        const auto& f = s.view_named("follower").camera.pose;
        doc["follower_from_leader"] = to_json(f * l.inverse());
    }
    return doc;
}

void write_scene(const scene& s, const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    const auto write_text = [&](const std::string& name, const std::string& text) {
        std::ofstream out(fs::path(directory) / name, std::ios::binary);
        if (!out) throw error(error_code::io, "cannot write " + name);
        out << text;
    };
    bool has_left = false, has_right = false;
    for (const auto& v : s.views) {
        write_png((fs::path(directory) / (v.camera.name + ".png")).string(), v.picture);
        write_text(v.camera.name + ".json", serialize_keypoints(v.keypoints) + "\n");
        write_text("calib_" + v.camera.name + ".json", to_json(v.camera.camera).dump(2) + "\n");
        has_left |= v.camera.name == "leader_left";
        has_right |= v.camera.name == "leader_right";
    }
    if (has_left && has_right) write_text("rig.json", to_json(scene_rig(s)).dump(2) + "\n");
    write_text("ground_truth.json", ground_truth_json(s).dump(2) + "\n");
}

}  // namespace posekit
