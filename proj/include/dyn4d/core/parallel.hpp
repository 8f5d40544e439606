#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dyn4d/core/fpenv.hpp"

namespace dyn4d {

namespace detail {
inline std::atomic<int>& worker_override() {
  static std::atomic<int> value{0};
  return value;
}
}  // namespace detail

/// Number of workers used by `parallel_for`. DYN4D_THREADS wins over the hardware count;
/// `set_worker_count` (used by --deterministic) wins over both.
inline int worker_count() {
  if (int forced = detail::worker_override().load(); forced > 0) return forced;
  if (const char* env = std::getenv("DYN4D_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline void set_worker_count(int n) { detail::worker_override().store(n); }

/// Runs fn(i) for i in [0, n). Work items must write disjoint memory; every kernel in the
/// library is written so the result does not depend on how items are spread over workers.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const unsigned fp_mode = current_fp_mode();
  auto body = [&] {
    set_fp_mode(fp_mode);  // workers round like the caller
    try {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Calls fn(begin, end) over fixed-size chunks of [0, n).
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunk, Fn&& fn) {
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  parallel_for(n_chunks, [&](std::size_t c) { fn(c * chunk, std::min(n, (c + 1) * chunk)); });
}

}  // namespace dyn4d
