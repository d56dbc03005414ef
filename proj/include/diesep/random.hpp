#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace diesep {

/// Every random draw in the library goes through an explicitly seeded Stream.
using Stream = std::mt19937_64;

/// Derives an independent stream from a master seed and a path of indices
/// (e.g. {die, batch} or {channel}). The seed material is the master seed
/// followed by every path index, each split into low/high 32-bit words and fed
/// to std::seed_seq. Same (seed, path) always gives the same stream.
inline Stream make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (path.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return Stream(seq);
}

inline double uniform01(Stream& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace diesep
