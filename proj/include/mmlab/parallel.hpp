#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace mmlab {

// Thread cap: MMLAB_THREADS if set, else hardware concurrency (at least 1).
inline unsigned thread_limit() {
  if (const char* env = std::getenv("MMLAB_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Runs fn(i) for i in [0, count).  Each index owns its output slot, so the
// result is identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  unsigned threads = thread_limit();
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  if (threads > count) threads = static_cast<unsigned>(count);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace mmlab
