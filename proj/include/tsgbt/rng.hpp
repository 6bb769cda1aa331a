#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tsgbt {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent seeds for substreams.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the substream addressed by `path` under `master`. The derivation
/// depends only on the values, so a task gets the same stream no matter which
/// thread runs it or in what order.
constexpr std::uint64_t substream_seed(std::uint64_t master,
                                       std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = mix64(master);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(substream_seed(master, path));
}

}  // namespace tsgbt
