#include "posekit/error.hpp"
#include "posekit/keypoints.hpp"

#include <doctest.h>

#include <random>

using namespace posekit;

namespace {

nlohmann::json person_json(const skeleton& s) {
    nlohmann::json kp = nlohmann::json::array();
    for (const auto& p : s) kp.push_back(p ? nlohmann::json{p->x(), p->y()} : nlohmann::json{-1, -1});
    return {{"keypoints", kp}};
}

nlohmann::json document(const std::vector<skeleton>& persons, int width = 640, int height = 480) {
    nlohmann::json people = nlohmann::json::array();
    for (const auto& s : persons) people.push_back(person_json(s));
    return {{"image", "frame.png"}, {"width", width}, {"height", height}, {"timestamp", 12.5}, {"people", people}};
}

skeleton person_at(double x0, double y0) {
    skeleton s;
    for (int k = 0; k < keypoint_count; ++k) s[k] = Eigen::Vector2d(x0 + 3.0 * (k % 5), y0 + 11.0 * k);
    return s;
}

skeleton random_person(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> x(0.0, 639.0), y(0.0, 479.0), u(0.0, 1.0);
    skeleton s;
    for (auto& p : s) {
        if (u(rng) < 0.8) p = Eigen::Vector2d(x(rng), y(rng));
    }
    return s;
}

}  // namespace

TEST_CASE("persons are ordered left to right") {
    const auto parsed = parse_keypoints(document({person_at(300, 50), person_at(100, 60)}));
    REQUIRE(parsed.set.persons.size() == 2);
    CHECK(parsed.set.persons[0][0]->x() == 100.0);
    CHECK(parsed.set.persons[1][0]->x() == 300.0);
    CHECK(parsed.set.timestamp == 12.5);
    CHECK(parsed.set.image == "frame.png");
}

TEST_CASE("sorting ties fall back to mean y, then input order") {
    skeleton a, b, c;
    a[0] = Eigen::Vector2d(10, 50);
    b[0] = Eigen::Vector2d(10, 20);
    c[0] = Eigen::Vector2d(10, 20);
    c[1] = Eigen::Vector2d(10, 20);
    std::vector<skeleton> persons{a, b, c};
    sort_left_to_right(persons);
    CHECK((*persons[0][0]).y() == 20.0);
    CHECK(visible_count(persons[0]) == 1);
    CHECK(visible_count(persons[1]) == 2);
    CHECK((*persons[2][0]).y() == 50.0);
}

TEST_CASE("a person without visible keypoints is dropped with a warning") {
    const auto parsed = parse_keypoints(document({skeleton{}, person_at(100, 10)}));
    CHECK(parsed.set.persons.size() == 1);
    CHECK(parsed.warnings.size() == 1);
}

TEST_CASE("coordinates outside the image become missing") {
    skeleton s = person_at(100, 10);
    s[3] = Eigen::Vector2d(700.0, 20.0);
    const auto parsed = parse_keypoints(document({s}));
    CHECK_FALSE(parsed.set.persons[0][3].has_value());
    CHECK(parsed.warnings.size() == 1);
}

TEST_CASE("serialize then parse round-trips bit for bit") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto first = parse_keypoints(document({random_person(rng), random_person(rng), random_person(rng)}));
        const std::string text = serialize_keypoints(first.set);
        const auto second = parse_keypoints_text(text);
        CHECK(serialize_keypoints(second.set) == text);
        REQUIRE(second.set.persons.size() == first.set.persons.size());
        for (std::size_t i = 0; i < first.set.persons.size(); ++i)
            for (int k = 0; k < keypoint_count; ++k) {
                CHECK(first.set.persons[i][k].has_value() == second.set.persons[i][k].has_value());
                if (first.set.persons[i][k]) CHECK(*first.set.persons[i][k] == *second.set.persons[i][k]);
            }
    }
}

TEST_CASE("malformed documents are parse errors") {
    const auto code_of = [](const nlohmann::json& doc) {
        try {
            parse_keypoints(doc);
        } catch (const error& e) {
            return e.code();
        }
        return error_code::io;
    };
    auto doc = document({person_at(10, 10)});
    auto body25 = doc;
    for (int k = 0; k < 7; ++k) body25["people"][0]["keypoints"].push_back({1.0, 1.0});
    CHECK(code_of(body25) == error_code::parse);
    auto missing = doc;
    missing.erase("people");
    CHECK(code_of(missing) == error_code::parse);
    auto wrong_type = doc;
    wrong_type["people"][0]["keypoints"][2] = "elbow";
    CHECK(code_of(wrong_type) == error_code::parse);
    CHECK_THROWS_AS(parse_keypoints_text("{not json"), error);
}

TEST_CASE("face box follows the ten percent rule") {
    skeleton s;
    s[nose] = Eigen::Vector2d(100, 105);
    s[right_eye] = Eigen::Vector2d(90, 95);
    s[left_eye] = Eigen::Vector2d(110, 95);
    s[right_ear] = Eigen::Vector2d(80, 115);
    s[left_ear] = Eigen::Vector2d(120, 115);
    const auto boxes = extract_boxes(s, 640, 480);
    REQUIRE(boxes[body_part::face].has_value());
    const box& f = *boxes[body_part::face];
    CHECK(f.x_min == doctest::Approx(76.0));
    CHECK(f.x_max == doctest::Approx(124.0));
    CHECK(f.y_min == doctest::Approx(93.0));
    CHECK(f.y_max == doctest::Approx(117.0));
    CHECK(f.area() == doctest::Approx(48.0 * 24.0));
}

TEST_CASE("absent groups") {
    skeleton s = person_at(200, 10);
    for (int k : part_members(body_part::face)) s[k].reset();
    CHECK_FALSE(extract_boxes(s, 640, 480)[body_part::face].has_value());

    skeleton tight;
    tight[right_shoulder] = Eigen::Vector2d(100, 100);
    tight[right_elbow] = Eigen::Vector2d(103, 100);
    CHECK_FALSE(extract_boxes(tight, 640, 480)[body_part::right_arm].has_value());

    skeleton single;
    single[left_wrist] = Eigen::Vector2d(300, 300);
    CHECK_FALSE(extract_boxes(single, 640, 480)[body_part::left_arm].has_value());
}

TEST_CASE("a zero-length span grows from the floor half-width") {
    skeleton s;
    s[right_hip] = Eigen::Vector2d(200, 200);
    s[right_knee] = Eigen::Vector2d(200, 260);
    s[right_ankle] = Eigen::Vector2d(200, 320);
    const auto lower = extract_boxes(s, 640, 480)[body_part::lower_body];
    REQUIRE(lower.has_value());
    CHECK(lower->width() == doctest::Approx(25.0));
    CHECK(lower->height() == doctest::Approx(144.0));
}

TEST_CASE("group membership") {
    CHECK(part_members(body_part::face) == std::vector<int>{nose, right_eye, left_eye, right_ear, left_ear});
    CHECK(part_members(body_part::upper_body) ==
          std::vector<int>{neck, right_shoulder, left_shoulder, right_hip, left_hip});
    CHECK(part_members(body_part::lower_body) ==
          std::vector<int>{right_hip, left_hip, right_knee, left_knee, right_ankle, left_ankle});
    CHECK(part_members(body_part::left_arm) == std::vector<int>{left_shoulder, left_elbow, left_wrist});
    CHECK(part_members(body_part::right_arm) == std::vector<int>{right_shoulder, right_elbow, right_wrist});
    CHECK(part_members(body_part::full_body).size() == keypoint_count);
}

TEST_CASE("boxes nest in the full body box and contain their members") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const skeleton s = random_person(rng);
        const auto boxes = extract_boxes(s, 640, 480);
        for (body_part part : all_body_parts) {
            const auto& b = boxes[part];
            if (!b) continue;
            CHECK(b->area() >= 600.0);
            CHECK(b->x_min >= 0.0);
            CHECK(b->y_min >= 0.0);
            CHECK(b->x_max <= 639.0);
            CHECK(b->y_max <= 479.0);
            REQUIRE(boxes[body_part::full_body].has_value());
            CHECK(boxes[body_part::full_body]->contains(*b));
        }
        if (boxes[body_part::full_body]) {
            for (const auto& p : s)
                if (p) CHECK(boxes[body_part::full_body]->contains(*p));
        }
    }
}

TEST_CASE("adding a keypoint never shrinks its group") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> x(0.0, 639.0), y(0.0, 479.0);
    for (int trial = 0; trial < 300; ++trial) {
        skeleton s = random_person(rng);
        const int slot = int(rng() % keypoint_count);
        s[slot].reset();
        const auto before = extract_boxes(s, 640, 480);
        s[slot] = Eigen::Vector2d(x(rng), y(rng));
        const auto after = extract_boxes(s, 640, 480);
        for (body_part part : all_body_parts) {
            const auto members = part_members(part);
            if (std::find(members.begin(), members.end(), slot) == members.end()) continue;
            if (!before[part] || part == body_part::full_body) continue;
            // Clamping to the full-body box can only widen along with it.
            REQUIRE(after[part].has_value());
            CHECK(after[part]->contains(*before[part]));
        }
    }
}
