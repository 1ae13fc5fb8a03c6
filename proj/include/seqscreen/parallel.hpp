#pragma once

#include <cstddef>
#include <functional>

namespace seqscreen::parallel {

/// Process-wide cap on worker threads (the CLI's --threads). Default 1.
void set_max_threads(unsigned n);
unsigned max_threads();

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into pre-sized slots so output never depends on scheduling.
/// The first exception thrown by any body is rethrown on the calling thread.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace seqscreen::parallel
