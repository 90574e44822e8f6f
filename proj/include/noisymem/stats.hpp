#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace noisymem {

/// Pairwise summation in a fixed tree order. Result depends only on the
/// input order, never on how the inputs were produced.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double v : xs) s += v;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// Monte-Carlo mean with its standard error.
struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

inline Estimate estimate(std::span<const double> samples) {
  Estimate e;
  e.n = samples.size();
  if (e.n == 0) return e;
  e.mean = pairwise_sum(samples) / static_cast<double>(e.n);
  if (e.n < 2) return e;
  std::vector<double> sq(e.n);
  for (std::size_t i = 0; i < e.n; ++i) {
    const double d = samples[i] - e.mean;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(e.n - 1);
  e.std_error = std::sqrt(var / static_cast<double>(e.n));
  return e;
}

/// Paired difference a_i - b_i (common random numbers).
inline Estimate paired_difference(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return estimate(d);
}

inline double root_mean_square(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = xs[i] * xs[i];
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(xs.size()));
}

/// |a - b| measured in units of the combined standard error; infinity when
/// both errors vanish and the means differ.
inline double z_score(double diff, double se) {
  if (se > 0.0) return diff / se;
  if (diff == 0.0) return 0.0;
  return diff > 0 ? std::numeric_limits<double>::infinity()
                  : -std::numeric_limits<double>::infinity();
}

}  // namespace noisymem
