#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nmsap {

struct Execution {
  unsigned threads = 1;

  static Execution hardware() {
    return Execution{std::max(1u, std::thread::hardware_concurrency())};
  }
};

/// Calls fn(i) for every i in [0, n). Each index is visited exactly once;
/// callers write into per-index slots so the result is independent of the
/// thread count. The first exception thrown by a worker is rethrown here.
template <typename Fn>
void parallel_for(std::size_t n, Execution exec, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(exec.threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(n);
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace nmsap
