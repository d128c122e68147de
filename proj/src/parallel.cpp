#include "seqtx/parallel.hpp"

#include <atomic>
#include <cstdint>

namespace seqtx {

namespace {
std::atomic<std::size_t> g_workers{0};
}

std::size_t worker_count() {
  const std::size_t n = g_workers.load();
  if (n > 0) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void set_worker_count(std::size_t n) { g_workers.store(n); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace seqtx
