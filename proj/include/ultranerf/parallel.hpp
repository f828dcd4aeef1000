#pragma once

#include <cstddef>
#include <functional>

namespace unerf {

/// Worker cap for parallel_for; 0 means hardware concurrency.
void set_max_threads(int n);
int max_threads();

/// Runs body(i) for i in [0, n). Iterations must be independent; results are
/// identical for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace unerf
