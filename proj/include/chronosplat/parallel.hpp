#pragma once

#include <cstddef>
#include <functional>

namespace chronosplat {

/// Worker count: CHRONOSPLAT_THREADS if set and positive, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Work items must write only to their own
/// slots; callers reduce the slots in index order afterwards so results do
/// not depend on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace chronosplat
