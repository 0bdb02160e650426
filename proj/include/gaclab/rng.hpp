#pragma once

#include <cstdint>
#include <random>

namespace gaclab {

// Stable 64-bit mix (splitmix64 finalizer) for deriving independent
// per-stream seeds from a base seed and stream indices.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix64(mix64(mix64(base ^ mix64(a)) ^ mix64(b)) ^ mix64(c));
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return std::mt19937_64(derive_seed(base, a, b, c));
}

}  // namespace gaclab
