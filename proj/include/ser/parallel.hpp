#pragma once

#include <cstddef>
#include <functional>

namespace ser {

/// Number of worker threads used by parallel_for. Reads SER_THREADS once;
/// defaults to hardware_concurrency clamped to [1, 16].
size_t worker_count();

/// Runs fn(begin, end) over a fixed contiguous partition of [0, n) on the
/// shared pool. The partition depends only on n and worker_count(), and each
/// chunk executes serially, so results are bitwise deterministic as long as
/// chunks write disjoint outputs. Small n runs inline on the caller.
void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn);

}  // namespace ser
