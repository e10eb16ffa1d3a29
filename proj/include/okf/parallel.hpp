#pragma once

#include <cstddef>
#include <functional>

namespace okf {

/// Worker cap for library-internal parallelism. 0 restores the default
/// (hardware concurrency).
void set_thread_limit(unsigned n);
unsigned thread_limit();

/// Calls fn(i) for i in [0, n) on up to thread_limit() threads. The first
/// exception thrown (lowest index) is rethrown after all workers finish.
/// Callers write results into per-index slots so output order is fixed.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace okf
