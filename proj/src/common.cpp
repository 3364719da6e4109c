#include "pointkan/common.hpp"

#include <atomic>
#include <thread>

namespace pointkan {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (threads == 0) threads = std::thread::hardware_concurrency();
  threads = std::min<std::size_t>(std::max<std::size_t>(threads, 1), n);
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace pointkan
