#pragma once

#include <cstddef>
#include <functional>

namespace nmt {

// Worker count for fan-out sections: DIVNMT_THREADS when set, otherwise the
// hardware concurrency. Every parallel section must write disjoint output
// slots indexed by task id, so results never depend on this value.
std::size_t worker_count();

// Runs fn(0..n-1) across up to worker_count() threads. Nested calls run
// serially in the caller's thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nmt
