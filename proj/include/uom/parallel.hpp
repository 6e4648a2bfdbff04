#pragma once

#include <cstddef>
#include <functional>

namespace uom {

/// Process-wide worker cap. Defaults to UOM_THREADS if set, else hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Calls fn(i) for every i in [0, n), split into contiguous chunks over up to
/// thread_count() threads. fn must only write to slots owned by i, which keeps
/// results independent of the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace uom
