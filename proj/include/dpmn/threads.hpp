#pragma once

#include <functional>

#include "dpmn/common.hpp"

namespace dpmn {

// Global worker count for kernel-level parallelism. Work is always split into
// contiguous disjoint ranges and every output element is produced by exactly
// one thread with a fixed inner-loop order, so results are bitwise identical
// for any thread count.
void set_threads(int n);
int thread_count();

// Calls fn(begin, end) over a partition of [0, n). Runs inline when the range
// is small or a single worker is configured.
void parallel_for(i64 n, const std::function<void(i64, i64)>& fn, i64 min_grain = 256);

struct ThreadGuard {  // RAII override, restores previous count
    explicit ThreadGuard(int n) : prev_(thread_count()) { set_threads(n); }
    ~ThreadGuard() { set_threads(prev_); }
    int prev_;
};

}  // namespace dpmn
