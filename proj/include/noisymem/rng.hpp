#pragma once

// Counter-based random numbers keyed by (seed, path, step, draw).
//
// Every variate is a pure function of its key, so a path can be regenerated
// in isolation, in any order, on any thread, and always yields the same bits.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace noisymem::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct CounterKey {
  std::uint64_t seed = 0;
  std::uint64_t path = 0;
  std::uint64_t step = 0;
};

inline constexpr std::uint64_t hash_key(const CounterKey& key, std::uint64_t draw) noexcept {
  std::uint64_t h = splitmix64(key.seed ^ 0x6A09E667F3BCC909ULL);
  h = splitmix64(h ^ key.path);
  h = splitmix64(h ^ (key.step * 0xD1B54A32D192ED03ULL));
  return splitmix64(h ^ (draw + 0x510E527FADE682D1ULL));
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
inline double uniform_open(const CounterKey& key, std::uint64_t draw) noexcept {
  const std::uint64_t bits = hash_key(key, draw) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on draws (2i, 2i+1); returns the cosine branch.
inline double standard_normal(const CounterKey& key, std::uint64_t index) noexcept {
  const double u1 = uniform_open(key, 2 * index);
  const double u2 = uniform_open(key, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Poisson(mean) by CDF inversion; mean is small (intensity times step).
inline unsigned poisson(const CounterKey& key, std::uint64_t draw, double mean) noexcept {
  if (mean <= 0.0) return 0;
  const double u = uniform_open(key, draw);
  double prob = std::exp(-mean);
  double cdf = prob;
  unsigned n = 0;
  while (u > cdf && n < 10000) {
    ++n;
    prob *= mean / n;
    cdf += prob;
    if (prob < 1e-300) break;
  }
  return n;
}

}  // namespace noisymem::rng
