#pragma once

// Static-partition parallel loop over an index range. Each index is
// handled by exactly one worker, so per-index writes stay deterministic.

#include <cstddef>
#include <functional>

namespace khess {

/// Worker count used by parallel_for; 0 selects hardware concurrency.
void set_threads(int n);
int threads();

void parallel_for(std::size_t count, const std::function<void(std::size_t begin, std::size_t end)>& body);

}  // namespace khess
