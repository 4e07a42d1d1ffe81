#pragma once

#include <cstddef>
#include <functional>

namespace fusion_bounds {

/// Runs body(i) for i in [0, n) on up to `threads` workers. Work items must
/// write only to their own slot; the result therefore does not depend on the
/// thread count. If any item throws, the exception from the lowest index is
/// rethrown after all workers join.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

/// Worker count used when callers pass threads <= 0.
int default_thread_count() noexcept;

}  // namespace fusion_bounds
