#pragma once

#include <cstddef>
#include <functional>

namespace flowood {

// Process-wide worker cap. 0 restores the hardware default.
void set_max_threads(std::size_t n);
std::size_t max_threads();

// Runs body(i) for i in [0, count). Work items are claimed by an atomic
// counter; callers that need a deterministic reduction must write results
// into per-item slots and reduce in index order afterwards. The first
// exception thrown by a body is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace flowood
