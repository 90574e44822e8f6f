#pragma once

// Malliavin derivatives that can actually be computed: the exact calculus of
// first-chaos exponentials, a bump estimator for general pathwise
// functionals, and Monte-Carlo checks of duality and Clark-Ocone.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "noisymem/error.hpp"
#include "noisymem/parallel.hpp"
#include "noisymem/paths.hpp"
#include "noisymem/stats.hpp"

namespace noisymem {

/// F(t) = scale * exp( int_0^t psi dB + int_0^t drift ds ) with deterministic
/// psi and drift, sampled on the nodes of [0, T] (index j).
///
/// D_t F(s) = F(s) psi(t) 1{t <= s}, and conditional expectations factor
/// through the exponential martingale, so everything here is closed form.
struct Chaos1Exponential {
  TimeGrid grid;
  std::vector<double> psi;
  std::vector<double> drift;
  double scale = 1.0;

  static Chaos1Exponential constant(const TimeGrid& grid, double psi, double drift, double scale = 1.0) {
    return {grid, std::vector<double>(grid.steps() + 1, psi), std::vector<double>(grid.steps() + 1, drift), scale};
  }
  /// exp(int psi dB - 1/2 int psi^2 ds): the stochastic exponential of psi.
  static Chaos1Exponential martingale(const TimeGrid& grid, std::vector<double> psi) {
    std::vector<double> drift(psi.size());
    for (std::size_t j = 0; j < psi.size(); ++j) drift[j] = -0.5 * psi[j] * psi[j];
    return {grid, std::move(psi), std::move(drift), 1.0};
  }
  /// exp(int psi dB) with no drift, e.g. a lognormal terminal price.
  static Chaos1Exponential lognormal(const TimeGrid& grid, std::vector<double> psi) {
    std::vector<double> drift(psi.size(), 0.0);
    return {grid, std::move(psi), std::move(drift), 1.0};
  }

  /// Exponent at node j: sum_{i<j} (psi_i dB_i + drift_i h).
  double log_level(const NoisePath& noise, std::size_t j) const {
    const std::size_t m = grid.zero_index();
    const double h = grid.step();
    double s = 0.0;
    for (std::size_t i = 0; i < j; ++i) s += psi[i] * noise.dB(m + i) + drift[i] * h;
    return s;
  }

  std::vector<double> values(const NoisePath& noise) const {
    const std::size_t m = grid.zero_index();
    const double h = grid.step();
    std::vector<double> out(grid.steps() + 1);
    double s = 0.0;
    out[0] = scale * std::exp(0.0);
    for (std::size_t i = 0; i < grid.steps(); ++i) {
      s += psi[i] * noise.dB(m + i) + drift[i] * h;
      out[i + 1] = scale * std::exp(s);
    }
    return out;
  }

  double value(const NoisePath& noise, std::size_t j) const { return scale * std::exp(log_level(noise, j)); }
  double terminal(const NoisePath& noise) const { return value(noise, grid.steps()); }

  /// Growth factor E[F(t_to) | F_{t_from}] / F(t_from) of the discrete path.
  double growth(std::size_t from, std::size_t to) const {
    const double h = grid.step();
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += (drift[i] + 0.5 * psi[i] * psi[i]) * h;
    return std::exp(s);
  }

  double expectation(std::size_t j) const { return scale * growth(0, j); }
  double expectation() const { return expectation(grid.steps()); }

  /// E[F(t_to) | F_{t_from}]; F(t_to) itself when to <= from.
  double conditional_expectation(const NoisePath& noise, std::size_t from, std::size_t to) const {
    if (to <= from) return value(noise, to);
    return value(noise, from) * growth(from, to);
  }

  /// E[D_{t_j} F(t_l) | F_{t_j}] = psi_j E[F(t_l) | F_{t_j}] 1{j <= l}.
  double conditional_malliavin(const NoisePath& noise, std::size_t j, std::size_t l) const {
    if (j > l) return 0.0;
    return psi[j] * conditional_expectation(noise, j, l);
  }
};

namespace detail {
inline std::size_t node_in_horizon(const TimeGrid& g, double t) {
  const std::size_t k = g.index_of(t);
  if (k < g.zero_index()) throw Error(ErrorKind::OffGrid, "time must lie in [0, T]");
  return k - g.zero_index();
}
}  // namespace detail

/// D_t F(s) on the given path: F(s) psi(t) 1{t <= s}.
inline double chaos1_malliavin(const Chaos1Exponential& F, const NoisePath& noise, double t, double s) {
  const std::size_t jt = detail::node_in_horizon(noise.grid(), t);
  const std::size_t js = detail::node_in_horizon(noise.grid(), s);
  if (jt > js) return 0.0;
  return F.value(noise, js) * F.psi[jt];
}

/// Forward-difference Malliavin estimate: sensitivity of `functional` to the
/// Brownian increment of the step starting at t. Exact for functionals that
/// are linear in that increment; otherwise biased by O(bump).
inline double bump_malliavin(const std::function<double(const NoisePath&)>& functional, const NoisePath& noise,
                             double t, double bump = 0.0) {
  const std::size_t k = noise.grid().index_of(t);
  if (k >= noise.grid().total_steps()) throw Error(ErrorKind::OffGrid, "no increment starts at the horizon");
  if (bump <= 0.0) bump = std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + std::abs(noise.dB(k)));
  return (functional(noise.with_bumped_increment(k, bump)) - functional(noise)) / bump;
}

/// Outcome of a Monte-Carlo duality test with common random numbers.
struct DualityResult {
  Estimate lhs;
  Estimate rhs;
  Estimate difference;
  double z_score = 0.0;
};

/// E[F int_0^T phi dB] against E[int_0^T E[D_t F | F_t] phi(t) dt].
///
/// `terminal(noise)` is F, `conditional_derivative(noise, j)` is
/// E[D_{t_j} F | F_{t_j}] and `phi(noise, j)` must only read increments
/// before node j.
template <typename TerminalFn, typename CondDerivFn, typename PhiFn>
DualityResult duality_check(const TimeGrid& grid, TerminalFn&& terminal, CondDerivFn&& conditional_derivative,
                            PhiFn&& phi, std::size_t n_paths, std::uint64_t seed) {
  std::vector<double> lhs(n_paths), rhs(n_paths);
  const std::size_t m = grid.zero_index();
  const double h = grid.step();
  parallel_for(n_paths, [&](std::size_t i) {
    const NoisePath noise = sample_noise(grid, JumpSpec::none(), seed, i);
    double stoch = 0.0;
    double det = 0.0;
    for (std::size_t j = 0; j < grid.steps(); ++j) {
      const double ph = phi(noise, j);
      stoch += ph * noise.dB(m + j);
      det += conditional_derivative(noise, j) * ph * h;
    }
    lhs[i] = terminal(noise) * stoch;
    rhs[i] = det;
  });
  DualityResult r;
  r.lhs = estimate(lhs);
  r.rhs = estimate(rhs);
  r.difference = paired_difference(lhs, rhs);
  r.z_score = z_score(r.difference.mean, r.difference.std_error);
  return r;
}

/// Duality check for F = F(T) of a first-chaos exponential.
template <typename PhiFn>
DualityResult duality_check(const Chaos1Exponential& F, PhiFn&& phi, std::size_t n_paths, std::uint64_t seed) {
  const std::size_t n = F.grid.steps();
  return duality_check(
      F.grid, [&](const NoisePath& noise) { return F.terminal(noise); },
      [&](const NoisePath& noise, std::size_t j) { return F.conditional_malliavin(noise, j, n); },
      std::forward<PhiFn>(phi), n_paths, seed);
}

/// |F(T) - E[F] - sum_j E[D_{t_j} F | F_{t_j}] dB_j| on one path.
inline double clark_ocone_residual(const Chaos1Exponential& F, const NoisePath& noise) {
  const std::size_t n = F.grid.steps();
  const std::size_t m = F.grid.zero_index();
  const auto values = F.values(noise);
  double integral = 0.0;
  for (std::size_t j = 0; j < n; ++j) integral += F.psi[j] * values[j] * F.growth(j, n) * noise.dB(m + j);
  return std::abs(values[n] - F.expectation() - integral);
}

/// Root-mean-square Clark-Ocone residual over n paths.
inline double clark_ocone_rms(const Chaos1Exponential& F, std::size_t n_paths, std::uint64_t seed,
                              std::size_t refine = 1) {
  std::vector<double> res(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    if (refine == 1) {
      res[i] = clark_ocone_residual(F, sample_noise(F.grid, JumpSpec::none(), seed, i));
    } else {
      const TimeGrid fine(F.grid.delta(), F.grid.horizon(), F.grid.steps_per_delay() * refine);
      res[i] = clark_ocone_residual(F, sample_noise(fine, JumpSpec::none(), seed, i).coarsen(refine));
    }
  });
  return root_mean_square(res);
}

}  // namespace noisymem
