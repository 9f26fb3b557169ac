#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace curaloop {

/// Runs task(i) for i in [0, count) on up to `workers` threads. Tasks must
/// write only to their own output slot; results are therefore independent
/// of the worker count. If several tasks throw, the exception from the
/// lowest index is rethrown.
template <class Task>
void parallel_for(std::size_t count, unsigned workers, Task&& task) {
  if (count == 0) return;
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            task(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace curaloop
