#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace polardial {

// Runs fn(i) for i in [0, n) on at most max_workers threads. Work items are
// claimed in index order. The exception of the lowest failing index is
// rethrown after all workers stop; items past a failure are skipped.
template <typename Fn>
void bounded_for(std::size_t n, std::size_t max_workers, Fn&& fn) {
  if (n == 0) return;
  max_workers = std::clamp<std::size_t>(max_workers, 1, n);
  if (max_workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::size_t error_index = n;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
        failed.store(true);
      }
    }
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(max_workers);
    for (std::size_t w = 0; w < max_workers; ++w) threads.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace polardial
