#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dictlab {

/// Process-wide worker count for batch loops (0 = hardware concurrency).
inline int& thread_count() {
  static int n = 0;
  return n;
}

inline int effective_threads(std::size_t work_items) {
  int n = thread_count();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  return static_cast<int>(std::min<std::size_t>(n, std::max<std::size_t>(work_items, 1)));
}

/// Parallel loop over [0, n).  `fn(i)` must only write to per-index slots;
/// results stay deterministic because any reduction happens afterwards in
/// index order.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int workers = effective_threads(n);
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t chunk = std::max<std::size_t>(1, n / (8 * static_cast<std::size_t>(workers)));
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t begin = next.fetch_add(chunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + chunk);
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Order-independent sum: accumulate in index order with Neumaier compensation.
template <typename Container>
double compensated_sum(const Container& values) {
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

}  // namespace dictlab
