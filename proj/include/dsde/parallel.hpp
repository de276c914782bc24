#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "dsde/linalg.hpp"

namespace dsde::detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items must be
/// independent; exceptions are collected and the first one rethrown.
template <typename Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<Index>(threads, n));
  std::atomic<Index> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      Index i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dsde::detail
