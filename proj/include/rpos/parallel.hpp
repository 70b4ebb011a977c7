#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace rpos::parallel {

inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{0};  // 0 = unset
  return cap;
}

inline void set_max_threads(int n) { thread_cap().store(n > 0 ? n : 0); }

inline int max_threads() {
  int cap = thread_cap().load();
  if (cap > 0) return cap;
  if (const char* env = std::getenv("RPOS_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

// Runs fn(i) for i in [0, n); results must land in preallocated slots so the
// outcome does not depend on the thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int nt = max_threads();
  if (nt <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min<std::size_t>(std::size_t(nt), n);
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace rpos::parallel
