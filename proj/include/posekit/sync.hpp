#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string_view>
#include <vector>

namespace posekit {

enum class stream { leader, follower };

std::string_view to_string(stream s);

struct stamped_item {
    double timestamp = 0.0;     // seconds
    std::uint64_t payload = 0;  // caller-defined reference to the observation
    stream source = stream::leader;
};

struct matched_pair {
    stamped_item leader;
    stamped_item follower;

    double gap() const;
};

enum class sync_policy {
    // A pair is emitted once no later item can form a closer pair with either member. The
    // emitted set then equals global nearest-first matching over everything pushed.
    exact,
    // A new item pairs at once with the nearest waiting item of the other stream.
    eager,
};

struct sync_config {
    double window = 0.05;  // seconds
    std::size_t buffer_capacity = 128;  // per stream
    sync_policy policy = sync_policy::exact;
};

// Pairs leader and follower observations whose timestamps differ by at most the window. Each item
// is consumed at most once; unmatched items stay buffered until evicted past capacity. push and
// flush may be called from several threads.
class sync_buffer {
public:
    explicit sync_buffer(sync_config cfg = {});

    // Throws ordering when the timestamp does not increase within its stream (the item is
    // rejected and the buffer is unchanged).
    std::vector<matched_pair> push(const stamped_item& item);

    // Emits every remaining pair as if both streams had ended.
    std::vector<matched_pair> flush();

    std::size_t pending(stream s) const;
    const sync_config& config() const { return cfg_; }

private:
    struct slot {
        stamped_item item;
        bool consumed = false;
    };

    std::vector<matched_pair> match(bool final);
    std::vector<matched_pair> match_eager(const stamped_item& item);
    void compact();

    sync_config cfg_;
    mutable std::mutex mutex_;
    std::deque<slot> leaders_;
    std::deque<slot> followers_;
    bool seen_leader_ = false;
    bool seen_follower_ = false;
    double last_leader_ = 0.0;
    double last_follower_ = 0.0;
};

}  // namespace posekit
