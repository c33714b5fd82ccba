#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pairnet {

using Rng = std::mt19937_64;

// Stable 64-bit mix of a seed and a key, for per-item generator streams that
// do not depend on iteration order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL + h;  // splitmix64 finalizer
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace pairnet
