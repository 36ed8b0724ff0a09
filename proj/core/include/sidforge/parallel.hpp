#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sidforge {

/// Fixed partition size for data-parallel loops. Work is split into blocks
/// of this many elements regardless of the worker count, and reductions
/// combine per-block partials in block order, so results are bit-identical
/// for any number of workers.
inline constexpr std::size_t kParallelBlock = 256;

inline unsigned resolve_workers(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::size_t block_count(std::size_t n) { return (n + kParallelBlock - 1) / kParallelBlock; }

/// Calls fn(block, begin, end) for every block of [0, n). The first
/// exception thrown by any worker is rethrown on the calling thread.
template <class Fn>
void parallel_blocks(std::size_t n, unsigned workers, Fn&& fn) {
  const std::size_t blocks = block_count(n);
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), blocks));
  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * kParallelBlock;
    fn(b, begin, std::min(n, begin + kParallelBlock));
  };
  if (threads <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) run_block(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < blocks; b = next++) {
        try {
          run_block(b);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = blocks;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sidforge
