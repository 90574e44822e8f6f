#pragma once

// Maximum principles in executable form: the derivative process K, the two
// formulas for the directional derivative of J, spike perturbations,
// necessary and sufficient condition checks and a first-order-condition solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "noisymem/adjoint.hpp"
#include "noisymem/dynamics.hpp"
#include "noisymem/error.hpp"
#include "noisymem/parallel.hpp"
#include "noisymem/paths.hpp"
#include "noisymem/rng.hpp"
#include "noisymem/stats.hpp"

namespace noisymem {

/// Sensitivity of the state to the control in direction eta, on all nodes of
/// [-delta, T] (zero on the initial segment), for the discrete Euler map:
/// dK = (K, K(t - delta), K_Z, eta) . [grad b dt + grad sigma dB + int grad gamma dN~]
/// with K_Z = int_{t-delta}^t phi(t, r) K dB.
inline std::vector<double> derivative_process(const CoefficientModel& model, const StateBundle& state,
                                              const ControlPath& control, const ControlPath& eta,
                                              const NoisePath& noise,
                                              const std::optional<MemoryKernel>& kernel = std::nullopt) {
  const TimeGrid& g = noise.grid();
  detail::require_same_grid(state.grid, g, "state");
  detail::require_same_grid(control.grid, g, "control");
  detail::require_same_grid(eta.grid, g, "direction");
  const std::size_t m = g.zero_index();
  const std::size_t total = g.total_steps();
  const double h = g.step();
  const bool general = kernel && !kernel->unit;
  const bool jumps = model.jump && model.jumps.active();
  std::vector<double> K(total + 1, 0.0);
  std::vector<double> K2(total + 1, 0.0);
  for (std::size_t k = m; k < total; ++k) {
    const std::size_t j = k - m;
    double kz = K2[k] - K2[k - m];
    if (general) {
      kz = 0.0;
      for (std::size_t i = k - m; i < k; ++i) kz += (*kernel)(g.time(k), g.time(i)) * K[i] * noise.dB(i);
    }
    const StatePoint p = state.point(j, control[j]);
    const double ky = K[k - m];
    double next = K[k] + model.grad_b(p).dot(K[k], ky, kz, eta[j]) * h +
                  model.grad_sigma(p).dot(K[k], ky, kz, eta[j]) * noise.dB(k);
    if (jumps) {
      for (double zeta : noise.jumps(k)) next += model.grad_gamma(p, zeta).dot(K[k], ky, kz, eta[j]);
      next -= h * model.levy_grad_gamma(p, [](double) { return 1.0; }).dot(K[k], ky, kz, eta[j]);
    }
    K[k + 1] = next;
    K2[k + 1] = K2[k] + K[k] * noise.dB(k);
  }
  return K;
}

/// Per-path samples of G g'(X(T)) K(T) + sum_j grad f . (K, K_Y, K_Z, eta) h.
inline std::vector<double> directional_samples_K(const CoefficientModel& model, const Ensemble& e,
                                                 const ControlPlan& eta) {
  const TimeGrid& g = e.grid;
  const std::size_t m = g.zero_index();
  const std::size_t n = g.steps();
  const double h = g.step();
  const bool general = e.kernel && !e.kernel->unit;
  std::vector<double> out(e.size());
  parallel_for(e.size(), [&](std::size_t i) {
    const ControlPath& c = e.control(i);
    const ControlPath& d = eta.for_path(i);
    const auto K = derivative_process(model, e.states[i], c, d, e.noises[i], e.kernel);
    double running = 0.0;
    if (model.running) {
      std::vector<double> K2(K.size(), 0.0);
      for (std::size_t k = 0; k + 1 < K.size(); ++k) K2[k + 1] = K2[k] + K[k] * e.noises[i].dB(k);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = j + m;
        double kz = K2[k] - K2[k - m];
        if (general) {
          kz = 0.0;
          for (std::size_t l = k - m; l < k; ++l) kz += (*e.kernel)(g.time(k), g.time(l)) * K[l] * e.noises[i].dB(l);
        }
        running += model.grad_f(e.states[i].point(j, c[j])).dot(K[k], K[k - m], kz, d[j]) * h;
      }
    }
    out[i] = running + model.weight(e.noises[i]) * model.g_prime(e.states[i].terminal()) * K.back();
  });
  return out;
}

/// Directional derivative of J through the derivative process.
inline Estimate directional_derivative_K(const CoefficientModel& model, const Ensemble& e, const ControlPlan& eta) {
  return estimate(directional_samples_K(model, e, eta));
}

/// Where dH/du is evaluated: at the adjoint node value p(t_j), or at the
/// one-step predictor E[p(t_{j+1}) | F_{t_j}] = p_j - mu_j h, which is the
/// multiplier of the discrete Euler map.
enum class AdjointEvaluation { Node, Predictable };

inline double adjoint_value(const AdjointTriple& a, std::size_t j, AdjointEvaluation at) {
  return at == AdjointEvaluation::Node ? a.p[j] : a.p[j] - a.mu[j] * a.grid.step();
}

/// dH/du at node j of path i.
inline double hamiltonian_du(const CoefficientModel& model, const Ensemble& e, const std::vector<AdjointTriple>& adj,
                             std::size_t i, std::size_t j, double u,
                             AdjointEvaluation at = AdjointEvaluation::Node) {
  const StatePoint pt = e.states[i].point(j, u);
  const double p = adjoint_value(adj[i], j, at);
  const double q = adj[i].q[j];
  const MarkFunction& r = adj[i].r[j];
  double d = model.grad_f(pt).u + model.grad_b(pt).u * p + model.grad_sigma(pt).u * q;
  if (model.jump && model.jumps.active())
    d += model.jumps.levy_integral([&](double z) { return model.grad_gamma(pt, z).u * r(z); });
  return d;
}

/// Per-path samples of sum_j dH/du(t_j) eta(t_j) h.
inline std::vector<double> directional_samples_H(const CoefficientModel& model, const Ensemble& e,
                                                 const std::vector<AdjointTriple>& adj, const ControlPlan& eta,
                                                 AdjointEvaluation at = AdjointEvaluation::Node) {
  if (adj.size() != e.size()) throw Error(ErrorKind::InvalidArgument, "one adjoint per path is required");
  const std::size_t n = e.grid.steps();
  const double h = e.grid.step();
  std::vector<double> out(e.size());
  parallel_for(e.size(), [&](std::size_t i) {
    const ControlPath& c = e.control(i);
    const ControlPath& d = eta.for_path(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (d[j] == 0.0) continue;
      s += hamiltonian_du(model, e, adj, i, j, c[j], at) * d[j] * h;
    }
    out[i] = s;
  });
  return out;
}

/// Directional derivative of J as E[int dH/du eta dt].
inline Estimate directional_derivative_H(const CoefficientModel& model, const Ensemble& e,
                                         const std::vector<AdjointTriple>& adj, const ControlPlan& eta,
                                         AdjointEvaluation at = AdjointEvaluation::Node) {
  return estimate(directional_samples_H(model, e, adj, eta, at));
}

/// Central difference (J(pi + s eta) - J(pi - s eta)) / 2s on common random
/// numbers; one-sided when one of the shifted controls leaves the control set.
inline Estimate finite_difference_J(const CoefficientModel& model, const ControlPlan& control, const ControlPlan& eta,
                                    double s, std::size_t n_paths, std::uint64_t seed,
                                    const std::optional<MemoryKernel>& kernel = std::nullopt) {
  auto shifted = [&](double sign) -> std::optional<ControlPlan> {
    std::vector<ControlPath> paths;
    const std::size_t count = std::max(control.paths.size(), eta.paths.size());
    for (std::size_t i = 0; i < count; ++i) {
      ControlPath c = control.for_path(i).plus(eta.for_path(i), sign * s);
      for (double v : c.values)
        if (!model.controls.contains(v)) return std::nullopt;
      paths.push_back(std::move(c));
    }
    return paths.size() == 1 ? ControlPlan(paths.front()) : ControlPlan(std::move(paths));
  };
  const auto up_plan = shifted(1.0);
  const auto dn_plan = shifted(-1.0);
  if (!up_plan && !dn_plan) throw Error(ErrorKind::OutOfControlSet, "both shifted controls leave the control set");
  const auto up = payoff_samples(model, up_plan ? *up_plan : control, n_paths, seed, kernel);
  const auto dn = payoff_samples(model, dn_plan ? *dn_plan : control, n_paths, seed, kernel);
  const double width = (up_plan && dn_plan) ? 2.0 * s : s;
  Estimate d = paired_difference(up, dn);
  d.mean /= width;
  d.std_error /= width;
  return d;
}

// ---------------------------------------------------------------------------
// Condition checks

struct ConcavityProbe {
  bool passed = true;
  std::size_t probes = 0;
  double worst_gap = 0.0;
  /// first violating triple: points a, b (x, y, z, u), lambda and the gap
  std::optional<std::vector<double>> witness;
};

struct MPReport {
  std::string condition;
  /// E[dH/du | G_t] per node, or the largest variational product per node
  std::vector<double> values;
  std::vector<double> std_errors;
  double sup_norm = 0.0;
  /// max_j |value_j| / se_j (infinite for a nonzero value with zero error)
  double max_z = 0.0;
  /// max_j (value_j - k se_j) for products, max_j (|value_j| - k se_j) otherwise
  double statistic = 0.0;
  double tolerance = 0.0;
  double se_multiple = 0.0;
  bool passed = false;
  bool vacuous = false;
  std::vector<Estimate> probes;
  std::optional<ConcavityProbe> concavity;
  std::optional<ConcavityProbe> terminal_concavity;
};

namespace detail {

inline double z_ratio(double v, double se) {
  if (v == 0.0) return 0.0;
  return se > 0.0 ? std::abs(v) / se : std::numeric_limits<double>::infinity();
}

/// E[dH/du(u_j) | G_{t_j}] per node: the ensemble mean under trivial
/// information, the pathwise value (reported as the mean over paths of its
/// absolute value) under full information.
inline void conditional_du(const CoefficientModel& model, const Ensemble& e, const std::vector<AdjointTriple>& adj,
                           InformationModel info, AdjointEvaluation at, std::vector<double>& mean,
                           std::vector<double>& se, std::vector<std::vector<double>>* pathwise = nullptr) {
  const std::size_t n = e.grid.steps();
  mean.assign(n, 0.0);
  se.assign(n, 0.0);
  std::vector<std::vector<double>> v(n, std::vector<double>(e.size()));
  parallel_for(e.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) v[j][i] = hamiltonian_du(model, e, adj, i, j, e.control(i)[j], at);
  });
  for (std::size_t j = 0; j < n; ++j) {
    if (info == InformationModel::Trivial) {
      const Estimate est = estimate(v[j]);
      mean[j] = est.mean;
      se[j] = est.std_error;
    } else {
      double worst = 0.0;
      for (double x : v[j]) worst = std::max(worst, std::abs(x));
      mean[j] = worst;
    }
  }
  if (pathwise) *pathwise = std::move(v);
}

/// Constant, indicator steps 1_{[t, T]} at dyadic nodes, and one seeded
/// random path bounded by 1.
inline std::vector<ControlPath> probe_directions(const TimeGrid& g, std::uint64_t seed = 1) {
  const double T = g.horizon();
  std::vector<ControlPath> out{ControlPath::constant(g, 1.0)};
  for (double frac : {0.5, 0.25}) out.push_back(ControlPath::from_function(g, [=](double t) { return t >= frac * T ? 1.0 : 0.0; }));
  ControlPath random = ControlPath::constant(g, 0.0);
  for (std::size_t j = 0; j < random.size(); ++j)
    random.values[j] = 2.0 * rng::uniform_open(rng::CounterKey{seed, 0x9b0beULL, j}, 0) - 1.0;
  out.push_back(std::move(random));
  return out;
}

}  // namespace detail

/// Thm-4.6-type check: E[dH/du | G_t] = 0 on every node. Passes when
/// max_j (|value_j| - se_multiple se_j) <= tol.
inline MPReport check_necessary_I(const CoefficientModel& model, const Ensemble& e,
                                  const std::vector<AdjointTriple>& adj, InformationModel info, double tol,
                                  double se_multiple = 3.0, AdjointEvaluation at = AdjointEvaluation::Node) {
  MPReport r;
  r.condition = "necessary-I";
  r.tolerance = tol;
  r.se_multiple = se_multiple;
  if (model.controls.is_singleton()) {
    r.vacuous = true;
    r.passed = true;
    return r;
  }
  detail::conditional_du(model, e, adj, info, at, r.values, r.std_errors);
  r.statistic = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < r.values.size(); ++j) {
    r.sup_norm = std::max(r.sup_norm, std::abs(r.values[j]));
    r.max_z = std::max(r.max_z, detail::z_ratio(r.values[j], r.std_errors[j]));
    r.statistic = std::max(r.statistic, std::abs(r.values[j]) - se_multiple * r.std_errors[j]);
  }
  r.passed = r.statistic <= tol;
  for (const auto& d : detail::probe_directions(e.grid)) r.probes.push_back(directional_derivative_H(model, e, adj, d, at));
  return r;
}

/// Thm-4.7-type variational inequality E[dH/du | G_t] (v - pi(t)) <= tol for v
/// at both endpoints and the midpoint of a closed control interval.
inline MPReport check_necessary_II(const CoefficientModel& model, const Ensemble& e,
                                   const std::vector<AdjointTriple>& adj, InformationModel info, double tol,
                                   double se_multiple = 3.0, AdjointEvaluation at = AdjointEvaluation::Node) {
  const ControlSet& set = model.controls;
  if (!set.is_closed_interval())
    throw Error(ErrorKind::InvalidArgument, "the variational inequality needs a closed bounded control interval");
  MPReport r;
  r.condition = "necessary-II";
  r.tolerance = tol;
  r.se_multiple = se_multiple;
  if (set.is_singleton()) {
    r.vacuous = true;
    r.passed = true;
    return r;
  }
  const std::size_t n = e.grid.steps();
  const std::vector<double> vs{set.lower, 0.5 * (set.lower + set.upper), set.upper};
  std::vector<double> mean, se;
  std::vector<std::vector<double>> pathwise;
  detail::conditional_du(model, e, adj, info, at, mean, se, &pathwise);
  r.values.assign(n, -std::numeric_limits<double>::infinity());
  r.std_errors.assign(n, 0.0);
  r.statistic = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    for (double v : vs) {
      double value = 0.0, err = 0.0;
      if (info == InformationModel::Trivial) {
        const double step = v - e.control(0)[j];
        value = mean[j] * step;
        err = se[j] * std::abs(step);
      } else {
        value = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < e.size(); ++i) value = std::max(value, pathwise[j][i] * (v - e.control(i)[j]));
      }
      if (value - se_multiple * err > r.values[j] - se_multiple * r.std_errors[j]) {
        r.values[j] = value;
        r.std_errors[j] = err;
      }
    }
    r.sup_norm = std::max(r.sup_norm, std::abs(r.values[j]));
    r.max_z = std::max(r.max_z, detail::z_ratio(std::max(r.values[j], 0.0), r.std_errors[j]));
    r.statistic = std::max(r.statistic, r.values[j] - se_multiple * r.std_errors[j]);
  }
  r.passed = r.statistic <= tol;
  return r;
}

struct SufficiencyOptions {
  std::size_t probe_count = 200;
  std::uint64_t seed = 1;
  double concavity_tol = 1e-12;
  double condition_tol = 1e-12;
  double se_multiple = 3.0;
  std::size_t control_samples = 5;
};

namespace detail {

/// A random control value in the admissible set near u.
inline double sample_control(const ControlSet& set, double u, double normal, double uniform) {
  if (set.is_bounded()) {
    const double v = set.lower + (set.upper - set.lower) * uniform;
    return set.contains(v) ? v : set.clamp(u);
  }
  if (std::isfinite(set.lower) && !std::isfinite(set.upper)) {
    const double base = std::max(u - set.lower, 1e-3);
    return set.lower + base * std::exp(0.5 * normal);
  }
  if (!std::isfinite(set.lower) && std::isfinite(set.upper)) {
    const double base = std::max(set.upper - u, 1e-3);
    return set.upper - base * std::exp(0.5 * normal);
  }
  return u + (1.0 + std::abs(u)) * normal;
}

}  // namespace detail

/// Thm-3.1-type certificate: (a) concavity of (x, y, z, u) -> H with the
/// adjoint frozen, and of x -> G g(x), by random chord probes around the
/// simulated states; (b) E[dH/du | G_t] (v - pi(t)) <= tol for sampled v.
inline MPReport check_sufficient(const CoefficientModel& model, const Ensemble& e,
                                 const std::vector<AdjointTriple>& adj, InformationModel info,
                                 const SufficiencyOptions& opt = {}) {
  const ControlSet& set = model.controls;
  const std::size_t n = e.grid.steps();
  MPReport r;
  r.condition = "sufficient";
  r.tolerance = opt.condition_tol;
  r.se_multiple = opt.se_multiple;

  ConcavityProbe hc, gc;
  for (std::size_t k = 0; k < opt.probe_count; ++k) {
    const rng::CounterKey key{opt.seed, 0x5eedc0cafULL, k};
    const std::size_t i = static_cast<std::size_t>(rng::uniform_open(key, 0) * static_cast<double>(e.size())) % e.size();
    const std::size_t j = static_cast<std::size_t>(rng::uniform_open(key, 1) * static_cast<double>(n)) % n;
    const StatePoint c = e.states[i].point(j, e.control(i)[j]);
    auto point = [&](std::uint64_t off) {
      StatePoint p = c;
      p.x += (1.0 + std::abs(c.x)) * rng::standard_normal(key, off);
      p.y += (1.0 + std::abs(c.y)) * rng::standard_normal(key, off + 1);
      p.z += (1.0 + std::abs(c.z)) * rng::standard_normal(key, off + 2);
      p.u = detail::sample_control(set, c.u, rng::standard_normal(key, off + 3), rng::uniform_open(key, off + 4));
      return p;
    };
    const StatePoint a = point(10), b = point(20);
    const double lambda = rng::uniform_open(key, 30);
    const StatePoint mid{c.t, lambda * a.x + (1 - lambda) * b.x, lambda * a.y + (1 - lambda) * b.y,
                         lambda * a.z + (1 - lambda) * b.z, lambda * a.u + (1 - lambda) * b.u};
    const auto& A = adj[i];
    auto H = [&](const StatePoint& p) { return hamiltonian(p, A.p[j], A.q[j], A.r[j], model).value; };
    const double gap = H(mid) - (lambda * H(a) + (1 - lambda) * H(b));
    ++hc.probes;
    hc.worst_gap = std::min(hc.worst_gap, gap);
    if (gap < -opt.concavity_tol && hc.passed) {
      hc.passed = false;
      hc.witness = std::vector<double>{a.x, a.y, a.z, a.u, b.x, b.y, b.z, b.u, lambda, gap};
    }
    if (model.terminal) {
      const double w = model.weight(e.noises[i]);
      const double xa = a.x, xb = b.x, xm = lambda * xa + (1 - lambda) * xb;
      const double ggap = w * (model.g(xm) - lambda * model.g(xa) - (1 - lambda) * model.g(xb));
      ++gc.probes;
      gc.worst_gap = std::min(gc.worst_gap, ggap);
      if (ggap < -opt.concavity_tol && gc.passed) {
        gc.passed = false;
        gc.witness = std::vector<double>{xa, xb, lambda, ggap};
      }
    }
  }
  r.concavity = hc;
  r.terminal_concavity = gc;

  std::vector<double> mean, se;
  std::vector<std::vector<double>> pathwise;
  detail::conditional_du(model, e, adj, info, AdjointEvaluation::Node, mean, se, &pathwise);
  r.values.assign(n, -std::numeric_limits<double>::infinity());
  r.std_errors.assign(n, 0.0);
  r.statistic = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t s = 0; s < opt.control_samples; ++s) {
      const rng::CounterKey key{opt.seed, 0x2140ULL + j, s};
      const double u0 = e.control(0)[j];
      const double v =
          detail::sample_control(set, u0, rng::standard_normal(key, 0), rng::uniform_open(key, 1));
      double value = 0.0, err = 0.0;
      if (info == InformationModel::Trivial) {
        value = mean[j] * (v - u0);
        err = se[j] * std::abs(v - u0);
      } else {
        value = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < e.size(); ++i) value = std::max(value, pathwise[j][i] * (v - e.control(i)[j]));
      }
      if (value - opt.se_multiple * err > r.values[j] - opt.se_multiple * r.std_errors[j]) {
        r.values[j] = value;
        r.std_errors[j] = err;
      }
    }
    r.sup_norm = std::max(r.sup_norm, std::abs(r.values[j]));
    r.max_z = std::max(r.max_z, detail::z_ratio(std::max(r.values[j], 0.0), r.std_errors[j]));
    r.statistic = std::max(r.statistic, r.values[j] - opt.se_multiple * r.std_errors[j]);
  }
  r.passed = hc.passed && gc.passed && r.statistic <= opt.condition_tol;
  return r;
}

// ---------------------------------------------------------------------------
// First-order condition

struct FocSolution {
  ControlPlan control;
  /// per node (trivial information) or per path and node (full): 1 where the
  /// root fell outside the control set and an endpoint was returned
  std::vector<std::vector<char>> clamped;
  std::size_t clamped_count = 0;
};

namespace detail {

/// Root of a monotone function on the control set by bisection to |F| <= tol.
/// Returns the root and whether it was clamped to an endpoint.
inline std::pair<double, bool> monotone_root(const std::function<double(double)>& F, const ControlSet& set,
                                             double tol) {
  double lo = set.lower, hi = set.upper;
  // open or infinite ends: bracket from inside
  auto inside_lo = [&]() {
    if (std::isfinite(lo) && !set.lower_open) return lo;
    if (std::isfinite(lo)) return lo + std::max(1e-300, 1e-12 * std::abs(lo));
    return -1.0;
  };
  auto inside_hi = [&]() {
    if (std::isfinite(hi) && !set.upper_open) return hi;
    if (std::isfinite(hi)) return hi - std::max(1e-300, 1e-12 * std::abs(hi));
    return 1.0;
  };
  double a = inside_lo(), b = inside_hi();
  if (set.is_singleton()) return {set.lower, false};
  if (a >= b) {
    if (!std::isfinite(lo)) a = b - 1.0;
    else b = a + 1.0;
  }
  double fa = F(a), fb = F(b);
  // grow towards infinite ends, or towards open finite ends
  for (int it = 0; it < 200 && fa * fb > 0.0; ++it) {
    const bool go_up = std::abs(fb) < std::abs(fa);
    if (go_up) {
      if (std::isfinite(hi)) {
        if (!set.upper_open || b == hi) break;
        b = hi - 0.5 * (hi - b);
      } else {
        b = b + 2.0 * (1.0 + std::abs(b));
      }
      fb = F(b);
    } else {
      if (std::isfinite(lo)) {
        if (!set.lower_open || a == lo) break;
        a = lo + 0.5 * (a - lo);
      } else {
        a = a - 2.0 * (1.0 + std::abs(a));
      }
      fa = F(a);
    }
  }
  if (!std::isfinite(fa) || !std::isfinite(fb))
    throw Error(ErrorKind::NonMonotone, "first-order condition is not finite on the bracket");
  if (fa == 0.0) return {a, false};
  if (fb == 0.0) return {b, false};
  if (fa * fb > 0.0) {
    if (!set.is_closed_interval())
      throw Error(ErrorKind::NonMonotone, "could not bracket a root of the first-order condition");
    // root outside the set: the endpoint in the direction of the root
    const bool increasing = fb > fa;
    const bool root_above = increasing ? fb < 0.0 : fb > 0.0;
    return {root_above ? set.upper : set.lower, true};
  }
  for (int it = 0; it < 400; ++it) {
    const double c = 0.5 * (a + b);
    const double fc = F(c);
    if (std::abs(fc) <= tol || c == a || c == b) return {c, false};
    if ((fc < 0.0) == (fa < 0.0)) {
      a = c;
      fa = fc;
    } else {
      b = c;
    }
  }
  return {0.5 * (a + b), false};
}

inline void require_monotone(const std::function<double(double)>& F, const ControlSet& set, double centre) {
  std::vector<double> us;
  for (int k = -4; k <= 4; ++k) {
    const double v = detail::sample_control(set, centre, 0.5 * k, (k + 5) / 10.0);
    if (set.contains(v)) us.push_back(v);
  }
  std::sort(us.begin(), us.end());
  us.erase(std::unique(us.begin(), us.end()), us.end());
  int sign = 0;
  for (std::size_t k = 1; k < us.size(); ++k) {
    const double d = F(us[k]) - F(us[k - 1]);
    const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
    if (s == 0 || (sign != 0 && s != sign))
      throw Error(ErrorKind::NonMonotone, "dH/du is not strictly monotone in u on the control set");
    sign = s;
  }
}

}  // namespace detail

/// Solves E[dH/du(t, X, u) | G_t] = 0 per node (for b_u = -1 this is
/// E[f_u | G_t] = E[p | G_t]) by bisection to |.| <= tol, clamped to the
/// control set. Under full information the condition is pathwise.
inline FocSolution solve_foc(const CoefficientModel& model, const Ensemble& e, const std::vector<AdjointTriple>& adj,
                             InformationModel info, double tol = 1e-10,
                             AdjointEvaluation at = AdjointEvaluation::Node) {
  const TimeGrid& g = e.grid;
  const std::size_t n = g.steps();
  const ControlSet& set = model.controls;
  auto node_fn = [&](std::size_t i, std::size_t j) {
    return [&, i, j](double u) { return hamiltonian_du(model, e, adj, i, j, u, at); };
  };
  if (info == InformationModel::Trivial) {
    ControlPath c{g, std::vector<double>(n + 1), InformationModel::Trivial};
    FocSolution out{ControlPlan(c), {std::vector<char>(n + 1, 0)}, 0};
    for (std::size_t j = 0; j <= n; ++j) {
      const std::function<double(double)> F = [&](double u) {
        std::vector<double> v(e.size());
        parallel_for(e.size(), [&](std::size_t i) { v[i] = hamiltonian_du(model, e, adj, i, j, u, at); });
        return pairwise_sum(v) / static_cast<double>(v.size());
      };
      detail::require_monotone(F, set, e.control(0)[j]);
      const auto [u, clamped] = detail::monotone_root(F, set, tol);
      c.values[j] = u;
      out.clamped[0][j] = clamped ? 1 : 0;
      out.clamped_count += clamped ? 1 : 0;
    }
    out.control = ControlPlan(c);
    return out;
  }
  std::vector<ControlPath> paths(e.size(), ControlPath{g, std::vector<double>(n + 1), InformationModel::Full});
  FocSolution out{ControlPlan(paths.front()), std::vector<std::vector<char>>(e.size(), std::vector<char>(n + 1, 0)), 0};
  parallel_for(e.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j <= n; ++j) {
      const std::function<double(double)> F = node_fn(i, j);
      detail::require_monotone(F, set, e.control(i)[j]);
      const auto [u, clamped] = detail::monotone_root(F, set, tol);
      paths[i].values[j] = u;
      out.clamped[i][j] = clamped ? 1 : 0;
    }
  });
  for (const auto& row : out.clamped) out.clamped_count += static_cast<std::size_t>(std::count(row.begin(), row.end(), 1));
  out.control = ControlPlan(std::move(paths));
  return out;
}

// ---------------------------------------------------------------------------
// Spike perturbations

/// pi_{h,t}: value v on [t0, t0 + width), base elsewhere.
inline ControlPath spike_perturbation(const ControlPath& base, double t0, double width, double v,
                                      const ControlSet& set) {
  if (!set.contains(v)) {
    std::ostringstream os;
    os << "spike value " << v << " is not admissible";
    throw Error(ErrorKind::OutOfControlSet, os.str());
  }
  const TimeGrid& g = base.grid;
  const std::size_t m = g.zero_index();
  const std::size_t k0 = g.index_of(t0);
  const std::size_t k1 = g.index_of(t0 + width);
  if (k0 < m || k1 > g.horizon_index() || k1 < k0)
    throw Error(ErrorKind::OffGrid, "spike window must lie inside [0, T]");
  ControlPath out = base;
  for (std::size_t k = k0; k < k1; ++k) out.values[k - m] = v;
  return out;
}

/// Spike applied only on the paths where `event` holds.
inline ControlPlan spike_perturbation(const ControlPath& base, double t0, double width, double v,
                                      const ControlSet& set, const std::vector<NoisePath>& noises,
                                      const std::function<bool(const NoisePath&)>& event) {
  const ControlPath spiked = spike_perturbation(base, t0, width, v, set);
  std::vector<ControlPath> paths;
  paths.reserve(noises.size());
  for (const auto& n : noises) {
    paths.push_back(event(n) ? spiked : base);
    paths.back().information = InformationModel::Full;
  }
  return ControlPlan(std::move(paths));
}

struct SpikeResult {
  double t0 = 0.0;
  double width = 0.0;
  double value = 0.0;
  /// J(spike) - J(base) on common random numbers
  Estimate gain;
  bool improves = false;
};

/// J(spike) - J(base) for a battery of spikes; `improves` when the gain
/// exceeds se_multiple standard errors.
inline std::vector<SpikeResult> spike_battery(const CoefficientModel& model, const ControlPath& base,
                                              const std::vector<std::pair<double, double>>& spikes, double width,
                                              std::size_t n_paths, std::uint64_t seed, double se_multiple = 2.0,
                                              const std::optional<MemoryKernel>& kernel = std::nullopt) {
  const auto ref = payoff_samples(model, base, n_paths, seed, kernel);
  std::vector<SpikeResult> out;
  for (const auto& [t0, v] : spikes) {
    const ControlPath c = spike_perturbation(base, t0, width, v, model.controls);
    const auto s = payoff_samples(model, c, n_paths, seed, kernel);
    SpikeResult r{t0, width, v, paired_difference(s, ref), false};
    r.improves = r.gain.mean > se_multiple * r.gain.std_error;
    out.push_back(r);
  }
  return out;
}

/// A deterministic battery of count (t0, v) pairs on the grid, v scaling the
/// base value by factors in [0.5, 1.5].
inline std::vector<std::pair<double, double>> default_spikes(const ControlPath& base, std::size_t count,
                                                             double width, const ControlSet& set) {
  const TimeGrid& g = base.grid;
  const std::size_t m = g.zero_index();
  const std::size_t span = static_cast<std::size_t>(std::llround(width / g.step()));
  const std::size_t last = g.steps() > span ? g.steps() - span : 0;
  std::vector<std::pair<double, double>> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t j = count > 1 ? (k * last) / (count - 1) : 0;
    const double factor = 0.5 + static_cast<double>(k % 5) * 0.25;
    double v = base[j] * (factor == 1.0 ? 1.2 : factor);
    if (!set.contains(v)) v = set.clamp(v);
    out.emplace_back(g.time(m + j), v);
  }
  return out;
}

}  // namespace noisymem
