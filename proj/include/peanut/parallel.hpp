#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace peanut {

inline int default_workers() {
  if (const char* env = std::getenv("PEANUT_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(i) for i in [0, n) across `workers` threads with a static
/// interleaved partition. Output written by index stays deterministic
/// regardless of the worker count. The first exception is rethrown.
template <typename Fn>
void parallel_for(int64_t n, int workers, Fn&& fn) {
  workers = static_cast<int>(std::max<int64_t>(1, std::min<int64_t>(workers, n)));
  if (workers == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (int t = 0; t < workers; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (int64_t i = t; i < n; i += workers) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace peanut
