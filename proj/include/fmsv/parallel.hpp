#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fmsv {

// requested <= 0 means "use the hardware"; the FMSV_THREADS environment
// variable caps whatever was decided. always at least one.
inline int resolve_threads(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("FMSV_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min<long>(n, cap);
  }
  return n;
}

// run fn(i) for i in [0, count). work is split into strided shards so the
// assignment of items to threads is fixed by (count, threads) alone; results
// must not depend on execution order. the first exception thrown by any
// shard is rethrown on the caller's thread.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (count <= 0) return;
  const int n = std::min(std::max(threads, 1), count);
  if (n == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (int w = 0; w < n; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += n) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fmsv
