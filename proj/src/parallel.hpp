#pragma once

#include <cstdint>
#include <functional>

namespace clusdiff {

/// Effective worker count: min(hardware, CLUSDIFF_THREADS if set, override).
/// An override of 0 means "no override".
int thread_budget();
void set_thread_override(int n);

/// Runs fn(i) for i in [0, n). Work is split by index range; each index
/// writes only its own outputs, so results never depend on the worker
/// count. Reductions belong to the caller, done in index order.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace clusdiff
