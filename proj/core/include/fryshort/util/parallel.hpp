#pragma once

#include <cstdint>
#include <functional>

namespace fryshort {

/// Worker cap resolved from FRYSHORT_NUM_WORKERS (falls back to hardware
/// concurrency). Always >= 1.
int max_workers();

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and the resolved worker count, and every chunk writes
/// disjoint outputs, so results are identical for any worker count as long
/// as fn itself has no cross-chunk reductions.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace fryshort
