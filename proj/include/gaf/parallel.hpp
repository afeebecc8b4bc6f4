#pragma once

#include <cstddef>
#include <functional>

namespace gaf {

/// Worker count used by parallel_for. Results never depend on this value:
/// callers partition work into fixed tasks and reduce in task order.
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [0, n). Nested calls run serially on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gaf
