#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace pano {

/// Splits [0, n) into contiguous chunks, one per worker. Callers only write disjoint
/// outputs, so results do not depend on `workers`.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t k = std::clamp<std::size_t>(workers < 1 ? 1 : workers, 1, std::max<std::size_t>(n, 1));
  if (k == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(k);
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t b = n * t / k, e = n * (t + 1) / k;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
}

}  // namespace pano
