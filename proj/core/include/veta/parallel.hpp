#pragma once

#include <cstddef>
#include <functional>

namespace veta {

/// Number of worker threads used by parallel_for. Defaults to the hardware
/// concurrency; 1 disables threading entirely.
void set_num_threads(int n);
int num_threads();

/// Runs body(i) for every i in [0, count). Work items are independent and
/// callers write results into per-item slots, so the outcome never depends on
/// the thread count or on scheduling order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace veta
