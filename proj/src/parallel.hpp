#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pcsrod {

namespace detail {
inline std::atomic<int>& thread_count_storage() {
  static std::atomic<int> count{0};
  return count;
}
}  // namespace detail

// Process-wide worker count for frame-parallel stages; 0 = hardware default.
inline void set_thread_count(int n) { detail::thread_count_storage() = n; }
inline int thread_count() {
  const int n = detail::thread_count_storage().load();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static block partition of [0, n) over the worker pool. Each index is
// visited exactly once and results must be written to preallocated slots, so
// output is independent of the pool size. The first exception wins and is
// rethrown on the caller thread.
inline void parallel_for(int n, const std::function<void(int)>& body,
                         int threads = 0) {
  if (threads <= 0) threads = thread_count();
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error = nullptr;
  std::mutex err_mutex;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (int i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pcsrod
