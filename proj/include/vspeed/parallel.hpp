#pragma once

#include <cstddef>
#include <functional>

namespace vspeed {

/// Worker count: VSPEED_THREADS when set and positive, else hardware concurrency.
unsigned thread_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Items must be
/// independent; the first exception thrown is rethrown after all workers join.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace vspeed
