#pragma once

#include <cstddef>
#include <functional>

namespace spg {

/// Worker count: SPG_THREADS if set to a positive integer, else hardware concurrency.
unsigned worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Iterations must be
/// independent. The first exception thrown by any iteration is rethrown after all
/// workers finish. Calls made from inside a worker run serially on that worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace spg
