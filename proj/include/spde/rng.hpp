// SPDX-License-Identifier: Apache-2.0
//
// Reproducible random streams.  Every (master seed, path, channel) triple maps
// to an independent engine through a SplitMix64 counter hash, so results do
// not depend on which worker simulates which path.
#pragma once

#include <cstdint>
#include <random>

namespace spde {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Named sub-streams of one path.
enum class Channel : std::uint64_t {
  wiener = 1,
  jumps = 2,
  initial = 3,
  quadrature = 4,
  checker = 5,
};

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t path, Channel channel) noexcept {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ (path + 0x632BE59BD9B4E019ULL));
  return splitmix64(s ^ static_cast<std::uint64_t>(channel));
}

inline Engine make_engine(std::uint64_t master, std::uint64_t path, Channel channel) {
  return Engine(stream_seed(master, path, channel));
}

}  // namespace spde
