#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace shiftbench {

// Runs body(i) for i in [0, n) on up to `jobs` threads. Work items are
// claimed dynamically; the first exception is rethrown after all workers join.
template <typename Body>
void parallel_for(std::size_t n, int jobs, Body&& body) {
  const auto width = static_cast<std::size_t>(std::max(1, jobs));
  if (width == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(width, n); ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace shiftbench
