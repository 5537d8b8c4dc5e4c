#pragma once

#include <cstdint>
#include <functional>

namespace bootplace {

// Number of worker threads: BOOTPLACE_THREADS when set (clamped to >= 1,
// unparsable values count as 1), otherwise the hardware concurrency.
int worker_count();

// Runs fn(i) for every i in [0, n), spread over worker_count() threads.
// Each index runs exactly once, so callers that write to per-index slots
// get the same result regardless of scheduling. The first exception thrown
// by any fn is rethrown in the caller after the pool drains.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace bootplace
