#pragma once

#include <cstdint>
#include <functional>

namespace parconv {

/// Maximum worker threads for parallel_for. Defaults to
/// hardware_concurrency, capped by the PARCONV_THREADS environment variable.
int max_threads();

/// Override the thread cap for this process (0 restores the default).
void set_max_threads(int n);

/// Static-partition parallel loop: fn(begin, end) on disjoint chunks.
/// Every index is owned by exactly one invocation, so writes to
/// index-disjoint outputs are race-free and results do not depend on the
/// thread count.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace parconv
