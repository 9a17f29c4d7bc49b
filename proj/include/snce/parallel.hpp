#pragma once

#include <cstdint>
#include <functional>

namespace snce {

// Runs fn(i) for i in [0, n), split into contiguous chunks over at most
// `threads` workers. Per-index outputs must not alias each other; under that
// contract results are identical for every thread count. threads <= 1 runs
// inline. Exceptions from workers are rethrown (first one wins).
void parallel_for(std::int64_t n, int threads,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace snce
