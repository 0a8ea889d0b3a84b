#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace mono3d {

// Worker count: MONO3D_THREADS when set (floored at 1), else the hardware
// concurrency. Parallel maps write into index-addressed slots, so results
// are identical regardless of the worker count.
inline int worker_count() {
  if (const char* env = std::getenv("MONO3D_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n) across up to worker_count() threads in
// contiguous chunks. fn must only touch state owned by index i.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  const int workers = std::min<std::int64_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mono3d
