// SPDX-License-Identifier: Apache-2.0
//
// Path-parallel fan-out and order-independent reductions.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace spde {

/// Runs body(i) for i in [0, n) on up to `threads` workers.  Results must be
/// written to per-index slots; the first exception is rethrown after join.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::jthread> pool;
  const unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(n));
  pool.reserve(count);
  for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

/// Pairwise summation; the result depends only on the order of `xs`.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct SampleStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double std_error = 0.0;
  std::size_t count = 0;
};

inline SampleStats sample_stats(std::span<const double> xs) {
  SampleStats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    std::vector<double> dev(xs.size());
    std::transform(xs.begin(), xs.end(), dev.begin(), [&](double x) { return (x - s.mean) * (x - s.mean); });
    s.variance = pairwise_sum(dev) / static_cast<double>(xs.size() - 1);
    s.std_error = std::sqrt(s.variance / static_cast<double>(xs.size()));
  }
  return s;
}

}  // namespace spde
