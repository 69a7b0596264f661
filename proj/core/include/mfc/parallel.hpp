#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace mfc {

// Index-parallel map. fn(i) must only touch state owned by index i; results
// are deterministic because reductions happen slot-wise afterwards.
template <typename F>
void parallel_for(int begin, int end, int jobs, F&& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([=, &fn]() {
      for (int i = begin + w; i < end; i += jobs) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace mfc
