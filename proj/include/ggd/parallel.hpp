#pragma once

#include <cstddef>
#include <functional>

namespace ggd {

// Number of workers used when a caller passes 0.
std::size_t default_threads();

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = default).
// Work items must write only to their own output slot; callers reduce the
// slots in index order afterwards, so results do not depend on scheduling.
// The first exception thrown by any item is rethrown on the calling thread.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace ggd
