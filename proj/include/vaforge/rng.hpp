#pragma once

// Seeded randomness with bit-reproducible output across standard libraries.
// std::mt19937_64 is fully specified by the standard, but the std::*_distribution
// adaptors are not, so the helpers below derive uniforms, normals and
// shuffles directly from engine output.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace vaforge {

using Engine = std::mt19937_64;

// SplitMix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix_seed(seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(std::uint64_t seed) { return Engine(mix_seed(seed)); }

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Engine& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform01(gen);
}

// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
inline std::uint64_t uniform_index(Engine& gen, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = Engine::max() - (Engine::max() % n + 1) % n;
  std::uint64_t v = gen();
  while (v > limit) v = gen();
  return v % n;
}

// Box-Muller; one draw per call (the second variate is discarded so that
// consumption per call is fixed).
inline double standard_normal(Engine& gen) {
  double u1 = uniform01(gen);
  while (u1 <= 0.0) u1 = uniform01(gen);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void shuffle(std::span<T> items, Engine& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_index(gen, i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace vaforge
