#pragma once

#include <cstddef>
#include <functional>

namespace mtr {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is striped by
/// index so results written to per-index slots do not depend on scheduling.
/// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Thread count from MTR_THREADS, falling back to 1.
std::size_t default_thread_count();

}  // namespace mtr
