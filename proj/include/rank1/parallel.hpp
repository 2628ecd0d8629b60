#pragma once
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace rank1 {

// Degree of parallelism for bulk loops. 0 = use hardware_concurrency.
// Results never depend on this: work items are indexed and reductions
// happen in index order after the loop.
inline int& parallel_degree() {
  static int degree = 0;
  return degree;
}

inline int effective_degree() {
  int d = parallel_degree();
  if (d <= 0) d = int(std::thread::hardware_concurrency());
  if (d <= 0) d = 1;
  return d;
}

// parallel_for(n, f): calls f(i) for i in [0,n). f must only write to
// per-index slots; ordering of side effects across i is unspecified.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
  int threads = effective_degree();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      f(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min<std::size_t>(threads, n);
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

// Convenience: map i -> T into a pre-sized vector (ordered by construction).
template <class T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& f) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = f(i); });
  return out;
}

} // namespace rank1
