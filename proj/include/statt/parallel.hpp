#pragma once

#include <cstddef>
#include <functional>

namespace statt {

/// Worker count: STATT_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i, worker) for i in [0, n) on up to `workers` threads. Items are
/// claimed dynamically, so fn must only write to per-item or per-worker
/// slots. The first exception thrown is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace statt
