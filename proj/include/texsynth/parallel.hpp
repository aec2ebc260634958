#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace texsynth {

/// Worker cap for internal parallelism: TEXSYNTH_THREADS if set, else the
/// hardware concurrency.
inline int thread_budget() {
  if (const char* env = std::getenv("TEXSYNTH_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n). Each index is processed by exactly one worker
/// and bodies never share accumulators, so results do not depend on the
/// worker count.
template <typename Body>
void parallel_for(int n, Body&& body, int min_per_worker = 1) {
  const int workers = std::min(thread_budget(), std::max(1, n / std::max(1, min_per_worker)));
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace texsynth
