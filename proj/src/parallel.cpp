#include "neo/parallel.hpp"

#include <atomic>

namespace neo {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int threads) {
  if (threads <= 0) {
    threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  g_threads.store(threads);
}

int thread_count() { return g_threads.load(); }

}  // namespace neo
