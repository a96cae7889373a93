#pragma once

#include <cstdint>
#include <functional>

namespace acfpn {

/// Number of worker threads used by the kernels. 0 selects the hardware
/// concurrency. Thread count never changes results: each output element is
/// produced by exactly one worker with a fixed per-element reduction order.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for every i in [0, count), partitioned into contiguous chunks.
/// work_per_index estimates the scalar operations behind one index; loops
/// whose total work does not cover the thread spawn cost run inline.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& fn,
                  std::int64_t work_per_index = 1024);

}  // namespace acfpn
