#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace difw {

/// Worker count from DIFW_THREADS, or 1 when unset or malformed.
int default_threads();

/// Rethrows `error` as the same difw error category with `context` prepended
/// to its message.
[[noreturn]] void rethrow_with_context(std::exception_ptr error, const std::string& context);

/// Runs fn(i) for i in [0, n) over contiguous chunks on `threads` workers.
/// Each index is processed by exactly one worker, so per-index results do not
/// depend on the worker count. The exception from the lowest failing index is
/// rethrown with the index attached.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> failed_at(workers, n);
  auto run_chunk = [&](std::size_t w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    for (std::size_t i = begin; i < end; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
        failed_at[w] = i;
        return;
      }
    }
  };
  if (workers == 1) {
    run_chunk(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run_chunk, w);
    run_chunk(0);
    for (auto& th : pool) th.join();
  }
  for (std::size_t w = 0; w < workers; ++w) {
    if (errors[w]) rethrow_with_context(errors[w], "point " + std::to_string(failed_at[w]));
  }
}

}  // namespace difw
