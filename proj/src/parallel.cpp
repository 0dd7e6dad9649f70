#include "parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace clusdiff {

namespace {
std::atomic<int> g_override{0};
}

void set_thread_override(int n) { g_override.store(n < 0 ? 0 : n); }

int thread_budget() {
  int n = int(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("CLUSDIFF_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
    if (cap >= 1 && n < 1) n = 1;
  }
  int ov = g_override.load();
  if (ov >= 1) n = ov;
  return n < 1 ? 1 : n;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  int workers = thread_budget();
  if (workers > n) workers = int(n);
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  // Static contiguous split; indices never shared between workers.
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers));
  int64_t chunk = (n + workers - 1) / workers;
  std::exception_ptr first_error = nullptr;
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  for (int w = 0; w < workers; ++w) {
    int64_t lo = w * chunk;
    int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!failed.exchange(true)) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace clusdiff
