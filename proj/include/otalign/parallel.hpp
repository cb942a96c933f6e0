#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace otalign {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions are kept
// per index so callers can handle them in a fixed order.
template <typename Fn>
std::vector<std::exception_ptr> parallel_for(std::size_t n, std::size_t threads,
                                             Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
    return errors;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) run(i);
    });
  }
  for (std::thread& t : pool) t.join();
  return errors;
}

}  // namespace otalign
