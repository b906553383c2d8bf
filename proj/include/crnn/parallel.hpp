#pragma once

#include <cstddef>
#include <functional>

namespace crnn {

/// Worker count from the CRNN_WORKERS environment variable, falling back to
/// the hardware concurrency. Always >= 1.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks, one
/// per worker; callers write results into per-index slots so the outcome
/// does not depend on scheduling. Exceptions from workers are rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace crnn
