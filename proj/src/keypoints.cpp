#include "posekit/keypoints.hpp"

#include "posekit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace posekit {

namespace {

constexpr std::array<std::string_view, keypoint_count> slot_names{
    "nose",       "neck",      "right_shoulder", "right_elbow", "right_wrist", "left_shoulder",
    "left_elbow", "left_wrist", "right_hip",     "right_knee",  "right_ankle", "left_hip",
    "left_knee",  "left_ankle", "right_eye",     "left_eye",    "right_ear",   "left_ear"};

constexpr std::array<std::string_view, body_part_count> part_names{
    "face", "upper_body", "lower_body", "left_arm", "right_arm", "full_body"};

Eigen::Vector2d mean_visible(const skeleton& person) {
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    int n = 0;
    for (const auto& kp : person) {
        if (kp) {
            sum += *kp;
            ++n;
        }
    }
    return n > 0 ? Eigen::Vector2d(sum / n) : sum;
}

[[noreturn]] void parse_fail(const std::string& what) {
    throw error(error_code::parse, "keypoints: " + what);
}

}  // namespace

std::string_view slot_name(int slot) { return slot_names.at(slot); }

std::string_view part_name(body_part part) { return part_names.at(static_cast<int>(part)); }

int visible_count(const skeleton& person) {
    return static_cast<int>(std::count_if(person.begin(), person.end(), [](const auto& kp) { return kp.has_value(); }));
}

void sort_left_to_right(std::vector<skeleton>& persons) {
    std::vector<Eigen::Vector2d> means(persons.size());
    std::transform(persons.begin(), persons.end(), means.begin(), mean_visible);
    std::vector<std::size_t> order(persons.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (means[a].x() != means[b].x()) return means[a].x() < means[b].x();
        if (means[a].y() != means[b].y()) return means[a].y() < means[b].y();
        return a < b;
    });
    std::vector<skeleton> sorted;
    sorted.reserve(persons.size());
    for (auto i : order) {
        sorted.push_back(persons[i]);
    }
    persons = std::move(sorted);
}

parse_result parse_keypoints(const nlohmann::json& doc) {
    if (!doc.is_object()) parse_fail("document is not an object");
    for (const char* field : {"image", "width", "height", "timestamp", "people"}) {
        if (!doc.contains(field)) parse_fail(std::string("missing field '") + field + "'");
    }
    if (!doc["image"].is_string()) parse_fail("'image' must be a string");
    if (!doc["width"].is_number_integer() || !doc["height"].is_number_integer()) {
        parse_fail("'width' and 'height' must be integers");
    }
    if (!doc["timestamp"].is_number()) parse_fail("'timestamp' must be a number");
    if (!doc["people"].is_array()) parse_fail("'people' must be an array");

    parse_result out;
    auto& set = out.set;
    set.image = doc["image"].get<std::string>();
    set.width = doc["width"].get<int>();
    set.height = doc["height"].get<int>();
    set.timestamp = doc["timestamp"].get<double>();
    if (set.width < 1 || set.height < 1) parse_fail("image size must be positive");

    const auto& people = doc["people"];
    for (std::size_t i = 0; i < people.size(); ++i) {
        const auto& entry = people[i];
        if (!entry.is_object() || !entry.contains("keypoints") || !entry["keypoints"].is_array()) {
            parse_fail("person " + std::to_string(i) + " has no keypoint array");
        }
        const auto& kps = entry["keypoints"];
        if (kps.size() != keypoint_count) {
            parse_fail("person " + std::to_string(i) + " has " + std::to_string(kps.size()) +
                       " keypoints; only the 18-point layout is supported");
        }
        skeleton person;
        for (int k = 0; k < keypoint_count; ++k) {
            const auto& xy = kps[k];
            if (!xy.is_array() || xy.size() != 2 || !xy[0].is_number() || !xy[1].is_number()) {
                parse_fail("person " + std::to_string(i) + " keypoint " + std::to_string(k) +
                           " is not an [x, y] pair");
            }
            const double x = xy[0].get<double>();
            const double y = xy[1].get<double>();
            if (x == -1.0 && y == -1.0) {
                continue;
            }
            if (!std::isfinite(x) || !std::isfinite(y) || x < 0.0 || y < 0.0 || x > set.width - 1 ||
                y > set.height - 1) {
                out.warnings.push_back("person " + std::to_string(i) + " " + std::string(slot_name(k)) +
                                       " lies outside the image; treated as missing");
                continue;
            }
            person[k] = Eigen::Vector2d(x, y);
        }
        if (visible_count(person) == 0) {
            out.warnings.push_back("person " + std::to_string(i) + " has no visible keypoints; dropped");
            continue;
        }
        set.persons.push_back(person);
    }
    sort_left_to_right(set.persons);
    return out;
}

parse_result parse_keypoints_text(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        parse_fail(e.what());
    }
    return parse_keypoints(doc);
}

nlohmann::json to_json(const keypoint_set& set) {
    nlohmann::json people = nlohmann::json::array();
    for (const auto& person : set.persons) {
        nlohmann::json kps = nlohmann::json::array();
        for (const auto& kp : person) {
            if (kp) {
                kps.push_back({kp->x(), kp->y()});
            } else {
                kps.push_back({-1, -1});
            }
        }
        people.push_back({{"keypoints", kps}});
    }
    return {{"image", set.image},
            {"width", set.width},
            {"height", set.height},
            {"timestamp", set.timestamp},
            {"people", people}};
}

std::string serialize_keypoints(const keypoint_set& set) { return to_json(set).dump(2); }

std::vector<int> part_members(body_part part) {
    switch (part) {
        case body_part::face:
            return {nose, right_eye, left_eye, right_ear, left_ear};
        case body_part::upper_body:
            return {neck, right_shoulder, left_shoulder, right_hip, left_hip};
        case body_part::lower_body:
            return {right_hip, left_hip, right_knee, left_knee, right_ankle, left_ankle};
        case body_part::left_arm:
            return {left_shoulder, left_elbow, left_wrist};
        case body_part::right_arm:
            return {right_shoulder, right_elbow, right_wrist};
        case body_part::full_body:
            break;
    }
    std::vector<int> all(keypoint_count);
    std::iota(all.begin(), all.end(), 0);
    return all;
}

namespace {

// Expanded, image-clamped span of the given members, before the area test.
std::optional<box> span_box(const skeleton& person, const std::vector<int>& members, int width,
                            int height, const box_config& cfg) {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    int n = 0;
    for (int slot : members) {
        const auto& kp = person[slot];
        if (!kp) continue;
        if (n == 0) {
            x_min = x_max = kp->x();
            y_min = y_max = kp->y();
        } else {
            x_min = std::min(x_min, kp->x());
            x_max = std::max(x_max, kp->x());
            y_min = std::min(y_min, kp->y());
            y_max = std::max(y_max, kp->y());
        }
        ++n;
    }
    if (n < 2) {
        return std::nullopt;
    }
    const auto grow = [&](double lo, double hi) {
        const double span = hi - lo;
        if (span <= 0.0) {
            const double mid = 0.5 * (lo + hi);
            return std::pair{mid - cfg.degenerate_half, mid + cfg.degenerate_half};
        }
        return std::pair{lo - cfg.margin * span, hi + cfg.margin * span};
    };
    auto [bx0, bx1] = grow(x_min, x_max);
    auto [by0, by1] = grow(y_min, y_max);
    box b{std::max(bx0, 0.0), std::max(by0, 0.0), std::min(bx1, double(width - 1)),
          std::min(by1, double(height - 1))};
    return b;
}

}  // namespace

body_part_boxes extract_boxes(const skeleton& person, int width, int height, const box_config& cfg) {
    body_part_boxes out;
    const auto full = span_box(person, part_members(body_part::full_body), width, height, cfg);
    if (!full) {
        return out;
    }
    for (auto part : all_body_parts) {
        std::optional<box> b = part == body_part::full_body
                                   ? full
                                   : span_box(person, part_members(part), width, height, cfg);
        if (!b) continue;
        b->x_min = std::max(b->x_min, full->x_min);
        b->y_min = std::max(b->y_min, full->y_min);
        b->x_max = std::min(b->x_max, full->x_max);
        b->y_max = std::min(b->y_max, full->y_max);
        if (b->width() <= 0.0 || b->height() <= 0.0 || b->area() < cfg.min_area) continue;
        out[part] = b;
    }
    return out;
}

}  // namespace posekit
