#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bshape {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive a child seed from a parent seed and a path of keys, e.g.
/// (master, bundle index, streamline index). Order of keys matters.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix64(seed);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::mt19937_64 keyed_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return std::mt19937_64(derive_seed(seed, keys));
}

/// Radical inverse of `index` in `base` (van der Corput / Halton coordinate).
constexpr double radical_inverse(std::uint64_t index, std::uint64_t base) noexcept {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

/// Halton coordinate with a Cranley-Patterson rotation: low discrepancy, but
/// randomised by `shift` in [0, 1).
inline double shifted_halton(std::uint64_t index, std::uint64_t base, double shift) noexcept {
  double u = radical_inverse(index, base) + shift;
  return u >= 1.0 ? u - 1.0 : u;
}

}  // namespace bshape
