#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace seqtx {

std::size_t worker_count();
void set_worker_count(std::size_t n);  // 0 restores the hardware default

/// Runs fn(i) for i in [0, count) on contiguous index blocks.  Results must be
/// written per index, so the outcome does not depend on the worker count.
template <class F>
void parallel_for(std::size_t count, F&& fn) {
  const std::size_t workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t lo = w * chunk, hi = std::min(count, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Seed for stream `index` derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace seqtx
