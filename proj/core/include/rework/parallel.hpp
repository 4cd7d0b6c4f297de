#pragma once

#include <cstddef>
#include <functional>

namespace rework {

/// Worker count: REWORKD_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Iterations must be independent; results must
/// be written to per-iteration slots so output does not depend on scheduling.
/// The first exception thrown by any iteration is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rework
