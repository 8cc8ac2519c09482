#pragma once

namespace a2f::runtime {

// Number of worker threads ops may use. Results are bit-identical for any
// thread count: parallel regions write disjoint slices and every reduction
// runs in a fixed order.
int thread_count();

// n < 1 resets to the default (hardware concurrency, capped at 8).
void set_thread_count(int n);

}  // namespace a2f::runtime
