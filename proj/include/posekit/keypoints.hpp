#pragma once

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace posekit {

// 18-point body layout, in detector output order.
inline constexpr int keypoint_count = 18;

enum keypoint_slot : int {
    nose = 0,
    neck,
    right_shoulder,
    right_elbow,
    right_wrist,
    left_shoulder,
    left_elbow,
    left_wrist,
    right_hip,
    right_knee,
    right_ankle,
    left_hip,
    left_knee,
    left_ankle,
    right_eye,
    left_eye,
    right_ear,
    left_ear,
};

std::string_view slot_name(int slot);

// One detected person; a missing keypoint is an empty slot (serialized as (-1, -1)).
using skeleton = std::array<std::optional<Eigen::Vector2d>, keypoint_count>;

int visible_count(const skeleton& person);

struct keypoint_set {
    std::string image;
    int width = 0;
    int height = 0;
    double timestamp = 0.0;
    std::vector<skeleton> persons;  // left-most first
};

struct parse_result {
    keypoint_set set;
    std::vector<std::string> warnings;
};

// Orders persons left to right by the mean x of their visible keypoints; ties fall back to
// mean y, then to input order.
void sort_left_to_right(std::vector<skeleton>& persons);

// Throws error_code::parse for malformed documents and for layouts other than 18 points.
// Persons with no visible keypoint are dropped; out-of-image coordinates become missing.
// Both events are reported in warnings.
parse_result parse_keypoints(const nlohmann::json& doc);
parse_result parse_keypoints_text(std::string_view text);

nlohmann::json to_json(const keypoint_set& set);
std::string serialize_keypoints(const keypoint_set& set);

enum class body_part : int { face = 0, upper_body, lower_body, left_arm, right_arm, full_body };

inline constexpr int body_part_count = 6;
inline constexpr std::array<body_part, body_part_count> all_body_parts{
    body_part::face,     body_part::upper_body, body_part::lower_body,
    body_part::left_arm, body_part::right_arm,  body_part::full_body};

std::string_view part_name(body_part part);

// Member slots of a part group; the full body uses every slot.
std::vector<int> part_members(body_part part);

struct box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
    }
    bool contains(const box& other) const {
        return other.x_min >= x_min && other.y_min >= y_min && other.x_max <= x_max &&
               other.y_max <= y_max;
    }
};

struct body_part_boxes {
    std::array<std::optional<box>, body_part_count> parts;

    const std::optional<box>& operator[](body_part part) const { return parts[static_cast<int>(part)]; }
    std::optional<box>& operator[](body_part part) { return parts[static_cast<int>(part)]; }
};

struct box_config {
    double min_area = 600.0;
    double margin = 0.10;           // fraction of the span added on each side
    double degenerate_half = 12.5;  // half-extent used along a zero-length span
};

// Group box = span of the visible members grown by margin*span per side, clamped to the
// image and to the full-body box. Groups with fewer than two visible members or an area
// below min_area are absent.
body_part_boxes extract_boxes(const skeleton& person, int width, int height, const box_config& cfg = {});

}  // namespace posekit
