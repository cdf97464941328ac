#pragma once

#include <cstddef>
#include <functional>

namespace aimh {

/// Worker-pool size: AIMH_WORKERS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) across worker_count() threads. Each index is
/// visited exactly once; callers write results into index-keyed slots so the
/// output never depends on scheduling. The first exception is rethrown after
/// all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace aimh
