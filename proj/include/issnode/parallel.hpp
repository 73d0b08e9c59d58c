#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace issnode {

inline std::size_t default_jobs() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

// Runs fn(i) for i in [0, count). Work items must be independent; results keyed
// by index stay deterministic regardless of scheduling.
inline void parallel_for(std::size_t count, std::size_t jobs,
                         const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  const std::size_t nw = std::min(jobs, count);
  for (std::size_t w = 0; w < nw; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += nw) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace issnode
