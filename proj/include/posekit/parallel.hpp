#pragma once

#include <cstddef>
#include <functional>

namespace posekit {

// Worker count: hardware concurrency, capped by POSEKIT_THREADS when set.
unsigned worker_count();

// Runs body(i) for i in [0, n). Each index is visited exactly once; results must be written to
// per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace posekit
