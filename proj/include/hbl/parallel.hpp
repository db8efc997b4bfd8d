#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace hbl {

// Worker count resolution: explicit argument wins, then HBL_THREADS, then 1.
// Single-threaded default keeps library calls reproducible by construction;
// callers opt in to parallelism.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HBL_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

// Runs f(i) for i in [0,n). Work item i always computes the same value no
// matter which worker claims it; callers must write results into slot i so the
// merged output is independent of scheduling.
template <class F>
void parallel_for(size_t n, int threads, F&& f) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr eptr;
  std::mutex em;
  auto work = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(em);
        if (!eptr) eptr = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  size_t nt = std::min<size_t>(threads, n);
  pool.reserve(nt);
  for (size_t t = 0; t < nt; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (eptr) std::rethrow_exception(eptr);
}

}  // namespace hbl
