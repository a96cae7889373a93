#include "acfpn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>
#include <vector>

namespace acfpn {

namespace {
std::atomic<int> g_num_threads{0};  // 0 = hardware concurrency

int resolved_threads() {
  const int n = g_num_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}
}  // namespace

void set_num_threads(int n) {
  if (n < 0) throw std::invalid_argument("set_num_threads: negative thread count");
  g_num_threads.store(n, std::memory_order_relaxed);
}

int num_threads() { return resolved_threads(); }

void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& fn,
                  std::int64_t work_per_index) {
  if (count <= 0) return;
  const int threads = std::min<std::int64_t>(resolved_threads(), count);
  // loops below the spawn cost run inline
  constexpr std::int64_t kMinTotalWork = 1 << 18;
  if (threads <= 1 || count < 2 || count * std::max<std::int64_t>(1, work_per_index) < kMinTotalWork) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::int64_t chunk = (count + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  for (int t = 0; t < threads; ++t) {
    const std::int64_t begin = t * chunk;
    const std::int64_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end]() {
      try {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace acfpn
