#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dmtl {

using Rng = std::mt19937_64;

// splitmix64 finalizer; mixes a base seed with stream identifiers so that
// independent consumers (layers, iterations, folds) never share a sequence.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> streams) {
  std::uint64_t h = mix_seed(seed);
  for (auto s : streams) h = mix_seed(h ^ mix_seed(s));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> streams = {}) {
  return Rng(derive_seed(seed, streams));
}

}  // namespace dmtl
