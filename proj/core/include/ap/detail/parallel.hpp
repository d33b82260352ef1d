#ifndef AP_DETAIL_PARALLEL_HPP
#define AP_DETAIL_PARALLEL_HPP

#include <functional>

namespace ap::detail {

// Number of workers: hardware concurrency capped by the HORSESHOE_THREADS
// environment variable (>= 1).
int worker_count();

// Runs fn(0..n-1) on the worker pool. Work items must write to disjoint
// slots; ordering of results is the caller's responsibility.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace ap::detail

#endif  // AP_DETAIL_PARALLEL_HPP
