#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace neo {

/// Worker cap shared by every parallel loop; 0 means hardware concurrency.
void set_thread_count(int threads);
int thread_count();

namespace detail {
inline thread_local bool in_worker = false;
}

/// Runs fn(begin, end, worker) over contiguous chunks of [0, n). Chunk
/// boundaries depend only on n and the worker count, so per-worker partial
/// results can be reduced in a fixed order. Loops nested inside a worker run
/// serially.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn&& fn, int workers = thread_count()) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (detail::in_worker) workers = 1;
  if (workers <= 1) {
    if (n > 0) fn(std::size_t{0}, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t per = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, w * per);
    const std::size_t end = std::min(n, begin + per);
    pool.emplace_back([&, w, begin, end] {
      detail::in_worker = true;
      try {
        if (begin < end) fn(begin, end, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, int workers = thread_count()) {
  parallel_chunks(
      n,
      [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      },
      workers);
}

}  // namespace neo
