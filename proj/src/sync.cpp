#include "posekit/sync.hpp"

#include "posekit/error.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace posekit {

std::string_view to_string(stream s) {
    return s == stream::leader ? "leader" : "follower";
}

double matched_pair::gap() const {
    return std::abs(follower.timestamp - leader.timestamp);
}

sync_buffer::sync_buffer(sync_config cfg) : cfg_(cfg) {
    if (!(cfg_.window > 0.0) || cfg_.buffer_capacity < 2) {
        throw error(error_code::precondition, "sync_buffer: window must be positive and capacity >= 2");
    }
}

std::size_t sync_buffer::pending(stream s) const {
    std::lock_guard lock(mutex_);
    return s == stream::leader ? leaders_.size() : followers_.size();
}

std::vector<matched_pair> sync_buffer::push(const stamped_item& item) {
    std::lock_guard lock(mutex_);
    if (!std::isfinite(item.timestamp)) {
        throw error(error_code::ordering, "sync_buffer: non-finite timestamp");
    }
    const bool is_leader = item.source == stream::leader;
    const bool seen = is_leader ? seen_leader_ : seen_follower_;
    const double last = is_leader ? last_leader_ : last_follower_;
    if (seen && !(item.timestamp > last)) {
        throw error(error_code::ordering, "sync_buffer: " + std::string(to_string(item.source)) + " timestamp " +
                                              std::to_string(item.timestamp) + " does not follow " +
                                              std::to_string(last));
    }
    (is_leader ? seen_leader_ : seen_follower_) = true;
    (is_leader ? last_leader_ : last_follower_) = item.timestamp;

    auto& queue = is_leader ? leaders_ : followers_;
    queue.push_back({item, false});
    while (queue.size() > cfg_.buffer_capacity) queue.pop_front();

    return cfg_.policy == sync_policy::eager ? match_eager(item) : match(false);
}

std::vector<matched_pair> sync_buffer::flush() {
    std::lock_guard lock(mutex_);
    return match(true);
}

std::vector<matched_pair> sync_buffer::match_eager(const stamped_item& item) {
    auto& others = item.source == stream::leader ? followers_ : leaders_;
    auto& mine = item.source == stream::leader ? leaders_ : followers_;
    slot* best = nullptr;
    for (auto& s : others) {
        if (s.consumed) continue;
        const double gap = std::abs(s.item.timestamp - item.timestamp);
        if (gap <= cfg_.window && (!best || gap < std::abs(best->item.timestamp - item.timestamp))) best = &s;
    }
    std::vector<matched_pair> out;
    if (best) {
        best->consumed = true;
        mine.back().consumed = true;
        out.push_back(item.source == stream::leader ? matched_pair{item, best->item} : matched_pair{best->item, item});
    }
    compact();
    return out;
}

std::vector<matched_pair> sync_buffer::match(bool final) {
    struct candidate {
        double gap;
        std::size_t l, f;
    };
    std::vector<candidate> candidates;
    for (std::size_t l = 0; l < leaders_.size(); ++l) {
        for (std::size_t f = 0; f < followers_.size(); ++f) {
            const double gap = std::abs(followers_[f].item.timestamp - leaders_[l].item.timestamp);
            if (gap <= cfg_.window) candidates.push_back({gap, l, f});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const candidate& a, const candidate& b) {
        return std::tie(a.gap, leaders_[a.l].item.timestamp, followers_[a.f].item.timestamp) <
               std::tie(b.gap, leaders_[b.l].item.timestamp, followers_[b.f].item.timestamp);
    });

    // Closest gap any future item could achieve: future timestamps exceed the stream's last one.
    const auto future_bound = [](double ts, bool seen_other, double last_other) {
        if (!seen_other) return 0.0;
        return ts < last_other ? last_other - ts : 0.0;
    };

    std::vector<bool> l_uncertain(leaders_.size(), false), f_uncertain(followers_.size(), false);
    std::vector<matched_pair> out;
    for (const auto& c : candidates) {
        auto& ls = leaders_[c.l];
        auto& fs = followers_[c.f];
        if (ls.consumed || fs.consumed) continue;
        bool settled = !l_uncertain[c.l] && !f_uncertain[c.f];
        if (settled && !final) {
            settled = c.gap <= future_bound(ls.item.timestamp, seen_follower_, last_follower_) &&
                      c.gap <= future_bound(fs.item.timestamp, seen_leader_, last_leader_);
        }
        if (!settled) {
            l_uncertain[c.l] = true;
            f_uncertain[c.f] = true;
            continue;
        }
        ls.consumed = fs.consumed = true;
        out.push_back({ls.item, fs.item});
    }
    compact();
    return out;
}

void sync_buffer::compact() {
    const auto drop = [](std::deque<slot>& q) {
        q.erase(std::remove_if(q.begin(), q.end(), [](const slot& s) { return s.consumed; }), q.end());
    };
    drop(leaders_);
    drop(followers_);
}

}  // namespace posekit
