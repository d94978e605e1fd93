#include "parconv/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace parconv {

namespace {

int env_thread_cap() {
  const char* v = std::getenv("PARCONV_THREADS");
  if (v == nullptr) return 0;
  const int n = std::atoi(v);
  return n > 0 ? n : 0;
}

std::atomic<int> g_override{0};

}  // namespace

int max_threads() {
  const int forced = g_override.load(std::memory_order_relaxed);
  if (forced > 0) return forced;
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  const int cap = env_thread_cap();
  if (cap > 0) n = std::min(n, cap);
  return n;
}

void set_max_threads(int n) {
  g_override.store(n > 0 ? n : 0, std::memory_order_relaxed);
}

void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  const int threads =
      static_cast<int>(std::min<std::int64_t>(max_threads(), n));
  if (threads <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    const std::int64_t begin = n * t / threads;
    const std::int64_t end = n * (t + 1) / threads;
    if (begin == end) continue;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace parconv
