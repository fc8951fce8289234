#include "posekit/error.hpp"
#include "posekit/sync.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>
#include <thread>

using namespace posekit;

namespace {

stamped_item leader_at(double t, std::uint64_t payload = 0) {
    return {t, payload, stream::leader};
}

stamped_item follower_at(double t, std::uint64_t payload = 0) {
    return {t, payload, stream::follower};
}

std::vector<matched_pair> replay(const std::vector<stamped_item>& items, sync_config cfg) {
    sync_buffer buffer(cfg);
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
    for (const auto& p : pairs) {
        if (!seen.insert(p.leader.payload).second) return false;
        if (!seen.insert(p.follower.payload).second) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("a close pair is emitted") {
    sync_buffer eager({.window = 0.05, .policy = sync_policy::eager});
    CHECK(eager.push(leader_at(1.0, 1)).empty());
    const auto pairs = eager.push(follower_at(1.01, 2));
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].leader.payload == 1);
    CHECK(pairs[0].follower.payload == 2);
    CHECK(pairs[0].gap() == doctest::Approx(0.01));
    CHECK(eager.pending(stream::leader) == 0);
    CHECK(eager.pending(stream::follower) == 0);

    // The exact policy waits until a later leader could no longer be closer to the follower.
    sync_buffer exact({.window = 0.05});
    exact.push(leader_at(1.0, 1));
    CHECK(exact.push(follower_at(1.01, 2)).empty());
    const auto settled = exact.push(leader_at(1.04, 3));
    REQUIRE(settled.size() == 1);
    CHECK(settled[0].leader.payload == 1);
    CHECK(exact.flush().empty());
}

TEST_CASE("a gap beyond the window leaves both buffered") {
    for (auto policy : {sync_policy::exact, sync_policy::eager}) {
        sync_buffer buffer({.window = 0.05, .policy = policy});
        CHECK(buffer.push(leader_at(1.0)).empty());
        CHECK(buffer.push(follower_at(1.06)).empty());
        CHECK(buffer.flush().empty());
        CHECK(buffer.pending(stream::leader) == 1);
        CHECK(buffer.pending(stream::follower) == 1);
    }
}

TEST_CASE("a scripted schedule matches the offline matcher") {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto items = support::scripted_schedule(seed, 100);
        const auto pairs = replay(items, {.window = 0.05});
        CHECK(support::pair_stamps(pairs) == support::offline_matches(items, 0.05));
        CHECK(no_reuse(pairs));
        for (const auto& p : pairs) CHECK(p.gap() <= 0.05);
    }
}

TEST_CASE("any interleaving yields the same pairs") {
    std::mt19937_64 rng(6);
    const auto items = support::scripted_schedule(7, 100);
    const auto expected = support::offline_matches(items, 0.05);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto pairs = replay(support::shuffle_streams(items, rng), {.window = 0.05});
        CHECK(no_reuse(pairs));
        CHECK(support::pair_stamps(pairs) == expected);
    }
}

TEST_CASE("eager pairs are within the window and never reuse an item") {
    std::mt19937_64 rng(8);
    const auto items = support::scripted_schedule(9, 200);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pairs = replay(support::shuffle_streams(items, rng), {.window = 0.05, .policy = sync_policy::eager});
        CHECK(no_reuse(pairs));
        for (const auto& p : pairs) CHECK(p.gap() <= 0.05);
    }
}

TEST_CASE("an out-of-order item is rejected and changes nothing") {
    sync_buffer buffer({.window = 0.05});
    buffer.push(leader_at(1.0, 1));
    buffer.push(leader_at(1.2, 2));
    for (double t : {1.1, 1.2}) {
        try {
            buffer.push(leader_at(t, 3));
            FAIL("expected an ordering error");
        } catch (const error& e) {
            CHECK(e.code() == error_code::ordering);
        }
    }
    CHECK(buffer.pending(stream::leader) == 2);
    CHECK_THROWS_AS(buffer.push(follower_at(std::nan(""))), error);
    const auto pairs = buffer.push(follower_at(1.21, 4));
    CHECK(buffer.flush().size() + pairs.size() == 1);
    CHECK(buffer.pending(stream::leader) == 1);
}

TEST_CASE("buffers never exceed their capacity") {
    sync_buffer buffer({.window = 0.01, .buffer_capacity = 8});
    for (int i = 0; i < 100; ++i) {
        buffer.push(leader_at(i * 1.0));
        buffer.push(follower_at(i * 1.0 + 0.5));
        CHECK(buffer.pending(stream::leader) <= 8);
        CHECK(buffer.pending(stream::follower) <= 8);
    }
    CHECK(buffer.pending(stream::leader) == 8);
}

TEST_CASE("concurrent pushers never double-consume") {
    const auto items = support::scripted_schedule(10, 400);
    std::vector<stamped_item> leaders, followers;
    for (const auto& it : items) (it.source == stream::leader ? leaders : followers).push_back(it);
    for (auto policy : {sync_policy::exact, sync_policy::eager}) {
        sync_buffer buffer({.window = 0.05, .buffer_capacity = 512, .policy = policy});
        std::mutex guard;
        std::vector<matched_pair> pairs;
        const auto pusher = [&](const std::vector<stamped_item>& list) {
            for (const auto& it : list) {
                const auto got = buffer.push(it);
                std::lock_guard lock(guard);
                pairs.insert(pairs.end(), got.begin(), got.end());
            }
        };
        std::thread a(pusher, std::cref(leaders)), b(pusher, std::cref(followers));
        a.join();
        b.join();
        const auto rest = buffer.flush();
        pairs.insert(pairs.end(), rest.begin(), rest.end());
        CHECK(no_reuse(pairs));
        if (policy == sync_policy::exact) CHECK(support::pair_stamps(pairs) == support::offline_matches(items, 0.05));
    }
}

TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(sync_buffer({.window = 0.0}), error);
    CHECK_THROWS_AS(sync_buffer({.window = 0.05, .buffer_capacity = 1}), error);
    CHECK(to_string(stream::leader) == "leader");
    CHECK(to_string(stream::follower) == "follower");
}
