#pragma once

#include <cstdint>
#include <functional>

namespace hdrfuse {

// Worker count resolution order: set_thread_count(), HDRFUSE_THREADS, then
// hardware concurrency. Always at least 1.
int thread_count();
void set_thread_count(int n);

// Runs fn(begin, end) over disjoint chunks of [0, n). Each index is handled by
// exactly one worker and every per-index reduction stays sequential, so the
// result is bit-identical to the single-threaded run for any worker count.
// Work smaller than `grain` runs inline on the calling thread.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn,
                  std::int64_t grain = 1);

// Per-index convenience wrapper.
void parallel_for_each(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace hdrfuse
