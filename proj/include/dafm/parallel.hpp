#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dafm {

/// Number of worker threads used when a caller passes jobs == 0.
inline std::size_t default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs body(i) for i in [0, count). Indices are split into contiguous
/// fixed blocks, one per worker, so every output slot is written by exactly
/// one thread and the result does not depend on scheduling. The first
/// exception thrown by any block is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t count, std::size_t jobs, Body&& body) {
  if (jobs == 0) jobs = default_jobs();
  jobs = std::min(jobs, count);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  const std::size_t block = (count + jobs - 1) / jobs;
  for (std::size_t w = 0; w < jobs; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(count, begin + block);
    workers.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace dafm
