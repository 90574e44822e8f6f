#pragma once

// Hamiltonian, adjoint equations by both routes (1D noisy-memory BSDE and
// 2D time-advanced BSDE) and the maps between them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "noisymem/dynamics.hpp"
#include "noisymem/error.hpp"
#include "noisymem/malliavin.hpp"
#include "noisymem/parallel.hpp"
#include "noisymem/paths.hpp"
#include "noisymem/regression.hpp"

namespace noisymem {

/// r(zeta) = c0 + c1 zeta.
struct MarkFunction {
  double c0 = 0.0;
  double c1 = 0.0;
  double operator()(double zeta) const noexcept { return c0 + c1 * zeta; }
  bool operator==(const MarkFunction&) const = default;
};

struct HamiltonianEval {
  double value = 0.0;
  Partials grad;
};

/// H = f + b p + sigma q + int gamma r dnu and its gradient in (x, y, z, u).
inline HamiltonianEval hamiltonian(const StatePoint& pt, double p, double q, const MarkFunction& r,
                                   const CoefficientModel& model) {
  HamiltonianEval h;
  const bool jumps = model.jump && model.jumps.active();
  const double jump_term = jumps ? model.jumps.levy_integral([&](double z) { return model.gamma(pt, z) * r(z); }) : 0.0;
  h.value = model.f(pt) + model.b(pt) * p + model.sigma(pt) * q + jump_term;
  h.grad = model.grad_f(pt);
  h.grad += model.grad_b(pt) * p;
  h.grad += model.grad_sigma(pt) * q;
  if (jumps) h.grad += model.levy_grad_gamma(pt, r);
  return h;
}

/// Adjoint (p, q, r) of the noisy-memory BSDE on the nodes of [0, T], with
/// mu holding E[mu | F_t].
struct AdjointTriple {
  TimeGrid grid;
  std::vector<double> p;
  std::vector<double> q;
  std::vector<MarkFunction> r;
  std::vector<double> mu;
};

/// Solution of the two-dimensional time-advanced BSDE on one path.
struct Adjoint2D {
  TimeGrid grid;
  std::vector<double> p1, p2, q1, q2;
  std::vector<MarkFunction> r1, r2;
  std::vector<double> mu1, mu2;
};

/// Point of the two-dimensional state: X1, X2 and their delayed values.
struct State2D {
  double t = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  double y1 = 0.0;
  double y2 = 0.0;
};

struct Adjoint2DNode {
  double p1 = 0.0, p2 = 0.0, q1 = 0.0, q2 = 0.0;
  MarkFunction r1, r2;
};

struct Hamiltonian2D {
  double value = 0.0;
  double residual = 0.0;
};

/// H2 = H(x1, y1, x2 - y2, u, p1, q1, r1) + x1 q2, compared with the
/// componentwise definition f + b.p + sigma.q + int gamma.r dnu of the 2D system.
inline Hamiltonian2D hamiltonian_2d_relation(const State2D& s, double u, const Adjoint2DNode& a,
                                             const CoefficientModel& model) {
  const StatePoint pt{s.t, s.x1, s.y1, s.x2 - s.y2, u};
  Hamiltonian2D out;
  out.value = hamiltonian(pt, a.p1, a.q1, a.r1, model).value + s.x1 * a.q2;
  // drift (b, 0), diffusion (sigma, x1), jumps (gamma, 0)
  double jump_term = 0.0;
  if (model.jump && model.jumps.active())
    jump_term = model.jumps.levy_integral([&](double z) { return model.gamma(pt, z) * a.r1(z) + 0.0 * a.r2(z); });
  const double componentwise =
      model.f(pt) + (model.b(pt) * a.p1 + 0.0 * a.p2) + (model.sigma(pt) * a.q1 + s.x1 * a.q2) + jump_term;
  out.residual = std::abs(out.value - componentwise);
  return out;
}

// ---------------------------------------------------------------------------
// Closed form for the linear family

/// a0, a1, sigma0(t), psi(t) of the linear model with sigma = sigma0 X, no
/// jumps and terminal weight exp(int psi dB).
struct LinearBSDESpec {
  TimeGrid grid;
  double a0 = 0.0;
  double a1 = 0.0;
  std::vector<double> sigma0;
  std::vector<double> psi;

  static LinearBSDESpec constant(const TimeGrid& grid, double a0, double a1, double sigma0, double psi) {
    return {grid, a0, a1, std::vector<double>(grid.steps() + 1, sigma0), std::vector<double>(grid.steps() + 1, psi)};
  }
};

/// Deterministic part of the closed-form solution.
///
/// p(t) = C exp(int_0^t psi dB + int_0^t (alpha - psi^2/2) ds), q = psi p, r = 0,
/// where alpha = -A - sigma0 psi is the drift rate of p and
/// A(t) = a1 + a0 psi(t) int_t^{(t+delta) ^ T} exp(int_t^s alpha) ds.
struct LinearClosedForm {
  LinearBSDESpec spec;
  std::vector<double> A;
  std::vector<double> alpha;
  /// sum_{i >= j} (alpha_i - psi_i^2 / 2) h
  std::vector<double> tail;
  double C = 1.0;
  std::size_t max_iterations = 0;

  /// p as a first-chaos exponential (for Malliavin derivatives).
  Chaos1Exponential family() const {
    std::vector<double> drift(alpha.size());
    for (std::size_t j = 0; j < alpha.size(); ++j) drift[j] = alpha[j] - 0.5 * spec.psi[j] * spec.psi[j];
    return {spec.grid, spec.psi, std::move(drift), C};
  }

  /// p on every node of [0, T]; p(T) equals the terminal weight exactly.
  std::vector<double> p_path(const NoisePath& noise) const {
    const auto G = Chaos1Exponential::lognormal(spec.grid, spec.psi);
    const std::size_t n = spec.grid.steps();
    std::vector<double> out(n + 1);
    for (std::size_t j = 0; j <= n; ++j) out[j] = G.value(noise, j) * std::exp(-tail[j]);
    return out;
  }

  AdjointTriple adjoint(const NoisePath& noise) const {
    detail::require_same_grid(noise.grid(), spec.grid, "noise");
    const std::size_t n = spec.grid.steps();
    AdjointTriple a{spec.grid, p_path(noise), std::vector<double>(n + 1), std::vector<MarkFunction>(n + 1),
                    std::vector<double>(n + 1)};
    for (std::size_t j = 0; j <= n; ++j) {
      a.q[j] = spec.psi[j] * a.p[j];
      a.mu[j] = (A[j] + spec.sigma0[j] * spec.psi[j]) * a.p[j];
    }
    return a;
  }

  /// The window integral a0 psi p int exp(int alpha) = (A - a1) p.
  std::vector<double> q2_path(const NoisePath& noise) const {
    auto p = p_path(noise);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] *= A[j] - spec.a1;
    return p;
  }
};

/// Backward sweep for A and alpha. A(t_k) involves alpha(t_k) itself through
/// the first quadrature cell, so each node solves a scalar fixed point.
inline LinearClosedForm solve_linear_closed_form(const LinearBSDESpec& spec) {
  const TimeGrid& g = spec.grid;
  const std::size_t n = g.steps();
  const std::size_t m = g.zero_index();
  const double h = g.step();
  if (spec.sigma0.size() != n + 1 || spec.psi.size() != n + 1)
    throw Error(ErrorKind::InvalidArgument, "sigma0 and psi need one value per node of [0, T]");
  LinearClosedForm s;
  s.spec = spec;
  s.A.assign(n + 1, spec.a1);
  s.alpha.assign(n + 1, 0.0);
  s.tail.assign(n + 1, 0.0);
  s.alpha[n] = -spec.a1 - spec.sigma0[n] * spec.psi[n];
  for (std::size_t jj = n; jj-- > 0;) {
    const std::size_t end = std::min(jj + m, n);
    auto window = [&](double a) {
      double integral = 0.0;
      double expo = 0.0;
      for (std::size_t l = jj; l < end; ++l) {
        integral += std::exp(expo) * h;
        expo += (l == jj ? a : s.alpha[l]) * h;
      }
      return integral;
    };
    double a = s.alpha[jj + 1];
    std::vector<double> trace{a};
    bool converged = false;
    for (std::size_t it = 1; it <= 200; ++it) {
      const double A = spec.a1 + spec.a0 * spec.psi[jj] * window(a);
      const double next = -A - spec.sigma0[jj] * spec.psi[jj];
      trace.push_back(next);
      if (!std::isfinite(next)) break;
      if (std::abs(next - a) <= 1e-15 * (1.0 + std::abs(next))) {
        a = next;
        s.A[jj] = A;
        s.max_iterations = std::max(s.max_iterations, it);
        converged = true;
        break;
      }
      a = next;
    }
    if (!converged) {
      std::ostringstream os;
      os << "alpha/A iteration did not contract at t = " << g.time(m + jj) << "; trace:";
      const std::size_t from = trace.size() > 6 ? trace.size() - 6 : 0;
      for (std::size_t i = from; i < trace.size(); ++i) os << ' ' << trace[i];
      throw Error(ErrorKind::FixedPointDiverged, os.str());
    }
    s.alpha[jj] = a;
  }
  for (std::size_t jj = n; jj-- > 0;)
    s.tail[jj] = (s.alpha[jj] - 0.5 * spec.psi[jj] * spec.psi[jj]) * h + s.tail[jj + 1];
  s.C = std::exp(-s.tail[0]);
  return s;
}

/// Model matching a linear spec with constant coefficients (see models.hpp
/// for the catalog version with logarithmic utility).
inline AdjointTriple solve_linear_closed_form(const LinearBSDESpec& spec, const NoisePath& noise) {
  return solve_linear_closed_form(spec).adjoint(noise);
}

// ---------------------------------------------------------------------------
// Malliavin window terms

/// dH/dz(s) along the paths, seen through E[. | F_t] and E[D_t . | F_t].
struct MalliavinSource {
  enum class Kind { Deterministic, Chaos1, Tabulated, Unavailable };

  Kind kind = Kind::Unavailable;
  /// Deterministic: dH/dz(t_l). Chaos1: coefficient c_l with dH/dz = c_l F(t_l).
  std::vector<double> values;
  std::optional<Chaos1Exponential> family;
  /// Tabulated: per path, entries [j * width + (l - j)] for j <= l <= j + m.
  std::vector<std::vector<double>> tab_expectation;
  std::vector<std::vector<double>> tab_malliavin;
  std::size_t width = 0;

  static MalliavinSource deterministic(std::vector<double> v) {
    MalliavinSource s;
    s.kind = Kind::Deterministic;
    s.values = std::move(v);
    return s;
  }
  static MalliavinSource chaos1(std::vector<double> coefficient, Chaos1Exponential F) {
    MalliavinSource s;
    s.kind = Kind::Chaos1;
    s.values = std::move(coefficient);
    s.family = std::move(F);
    return s;
  }
  static MalliavinSource unavailable() { return {}; }

  bool available() const noexcept { return kind != Kind::Unavailable; }

  /// E[dH/dz(t_l) | F_{t_j}] on path `path`, for j <= l <= j + m.
  double conditional_expectation(std::size_t path, const NoisePath& noise, std::size_t j, std::size_t l) const {
    switch (kind) {
      case Kind::Deterministic: return values[l];
      case Kind::Chaos1: return values[l] * family->conditional_expectation(noise, j, l);
      case Kind::Tabulated: return tab_expectation[path][j * width + (l - j)];
      case Kind::Unavailable: break;
    }
    throw Error(ErrorKind::MalliavinUnavailable, "no Malliavin representation of dH/dz was supplied");
  }

  /// E[D_{t_j} dH/dz(t_l) | F_{t_j}].
  double conditional_malliavin(std::size_t path, const NoisePath& noise, std::size_t j, std::size_t l) const {
    switch (kind) {
      case Kind::Deterministic: return 0.0;
      case Kind::Chaos1: return values[l] * family->conditional_malliavin(noise, j, l);
      case Kind::Tabulated: return tab_malliavin[path][j * width + (l - j)];
      case Kind::Unavailable: break;
    }
    throw Error(ErrorKind::MalliavinUnavailable, "no Malliavin representation of dH/dz was supplied");
  }
};

/// int_t^{t+delta} E[D_t dH/dz(s) | F_t] phi(t, s) 1_{[0,T]}(s) ds by the left-point rule.
inline double window_malliavin(const MalliavinSource& src, std::size_t path, const NoisePath& noise, std::size_t j,
                               const MemoryKernel* kernel = nullptr) {
  const TimeGrid& g = noise.grid();
  const std::size_t end = std::min(j + g.zero_index(), g.steps());
  const double h = g.step();
  const double t = g.time(g.zero_index() + j);
  double s = 0.0;
  for (std::size_t l = j; l < end; ++l) {
    const double w = kernel ? (*kernel)(t, g.time(g.zero_index() + l)) : 1.0;
    s += src.conditional_malliavin(path, noise, j, l) * w * h;
  }
  return s;
}

/// int_t^{t+delta} E[dH/dz(s) | F_t] 1_{[0,T]}(s) ds by the left-point rule.
inline double window_expectation(const MalliavinSource& src, std::size_t path, const NoisePath& noise,
                                 std::size_t j) {
  const TimeGrid& g = noise.grid();
  const std::size_t end = std::min(j + g.zero_index(), g.steps());
  double s = 0.0;
  for (std::size_t l = j; l < end; ++l) s += src.conditional_expectation(path, noise, j, l) * g.step();
  return s;
}

namespace detail {

inline std::vector<std::vector<double>> features_at(const Ensemble& e, std::size_t j, const BasisSpec& basis) {
  std::vector<std::vector<double>> cols;
  const std::size_t m = e.grid.zero_index();
  for (Feature f : basis.features) {
    std::vector<double> c(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      const StateBundle& s = e.states[i];
      switch (f) {
        case Feature::X: c[i] = s.x_at(j); break;
        case Feature::Y: c[i] = s.y[j]; break;
        case Feature::Z: c[i] = s.memory(j); break;
        case Feature::X2:
          if (!s.x2) throw Error(ErrorKind::InvalidArgument, "feature X2 needs an ensemble simulated with x2");
          c[i] = (*s.x2)[m + j];
          break;
      }
    }
    cols.push_back(std::move(c));
  }
  return cols;
}

inline bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace detail

/// Tabulates E[dH/dz(t_l) | F_{t_j}] and E[D_{t_j} dH/dz(t_l) | F_{t_j}] for a
/// pathwise evaluator of dH/dz: D by bumping the increment of step j,
/// conditioning by regression at t_j.
inline MalliavinSource tabulate_by_bump(const Ensemble& e,
                                        const std::function<std::vector<double>(std::size_t, const NoisePath&)>& dHdz,
                                        const BasisSpec& basis = {}, double bump = 1e-4) {
  const TimeGrid& g = e.grid;
  const std::size_t n = g.steps();
  const std::size_t m = g.zero_index();
  const std::size_t paths = e.size();
  MalliavinSource src;
  src.kind = MalliavinSource::Kind::Tabulated;
  const std::size_t w = m + 1;
  src.width = w;
  src.tab_expectation.assign(paths, std::vector<double>(n * w, 0.0));
  src.tab_malliavin.assign(paths, std::vector<double>(n * w, 0.0));
  std::vector<std::vector<double>> base(paths);
  parallel_for(paths, [&](std::size_t i) { base[i] = dHdz(i, e.noises[i]); });
  // raw[i][j * w + o]: pathwise bump derivative
  std::vector<std::vector<double>> raw(paths, std::vector<double>(n * w, 0.0));
  parallel_for(paths, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto bumped = dHdz(i, e.noises[i].with_bumped_increment(m + j, bump));
      for (std::size_t l = j + 1; l <= std::min(j + m, n); ++l) raw[i][j * w + (l - j)] = (bumped[l] - base[i][l]) / bump;
      // dH/dz(t_j) does not see the increment after t_j; use the right limit s -> t_j+
      raw[i][j * w] = raw[i][j * w + 1];
    }
  });
  for (std::size_t j = 0; j < n; ++j) {
    const Regression reg(detail::features_at(e, j, basis), basis);
    for (std::size_t l = j; l <= std::min(j + m, n); ++l) {
      std::vector<double> y(paths), d(paths);
      for (std::size_t i = 0; i < paths; ++i) {
        y[i] = base[i][l];
        d[i] = raw[i][j * w + (l - j)];
      }
      const auto fy = l == j ? y : reg.fit(y);
      const auto fd = reg.fit(d);
      for (std::size_t i = 0; i < paths; ++i) {
        src.tab_expectation[i][j * w + (l - j)] = fy[i];
        src.tab_malliavin[i][j * w + (l - j)] = fd[i];
      }
    }
  }
  return src;
}

// ---------------------------------------------------------------------------
// 1D driver and residual

/// E[mu'(t_j) | F_{t_j}] on every path, with
/// mu' = dH/dx(t) + E[dH/dy(t + delta) | F_t] 1{t + delta <= T}
///       + int_t^{t+delta} E[D_t dH/dz(s) | F_t] phi(t, s) 1_{[0,T]}(s) ds.
/// The kernel defaults to the ensemble's; phi == 1 gives mu bit-for-bit.
inline std::vector<std::vector<double>> mu_generalized(const Ensemble& e, const std::vector<AdjointTriple>& adj,
                                                       const CoefficientModel& model, const MalliavinSource& src,
                                                       const BasisSpec& basis = {},
                                                       const std::optional<MemoryKernel>& kernel = std::nullopt) {
  const TimeGrid& g = e.grid;
  const std::size_t n = g.steps();
  const std::size_t m = g.zero_index();
  const std::size_t paths = e.size();
  if (adj.size() != paths) throw Error(ErrorKind::InvalidArgument, "one adjoint per path is required");
  const std::optional<MemoryKernel>& kern = kernel ? kernel : e.kernel;
  const MemoryKernel* kp = kern ? &*kern : nullptr;

  std::vector<std::vector<Partials>> grad(paths, std::vector<Partials>(n + 1));
  parallel_for(paths, [&](std::size_t i) {
    for (std::size_t j = 0; j <= n; ++j) {
      const StatePoint pt = e.states[i].point(j, e.control(i)[j]);
      grad[i][j] = hamiltonian(pt, adj[i].p[j], adj[i].q[j], adj[i].r[j], model).grad;
    }
  });
  bool need_window = true;
  if (!src.available()) {
    for (const auto& gi : grad)
      for (const auto& gr : gi)
        if (gr.z != 0.0) throw Error(ErrorKind::MalliavinUnavailable, "dH/dz is non-zero but has no Malliavin source");
    need_window = false;
  }

  std::vector<std::vector<double>> mu(paths, std::vector<double>(n + 1, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> advance(paths, 0.0);
    if (j + m <= n) {
      for (std::size_t i = 0; i < paths; ++i) advance[i] = grad[i][j + m].y;
      if (!detail::all_zero(advance)) advance = Regression(detail::features_at(e, j, basis), basis).fit(advance);
    }
    parallel_for(paths, [&](std::size_t i) {
      const double w = need_window ? window_malliavin(src, i, e.noises[i], j, kp) : 0.0;
      mu[i][j] = grad[i][j].x + advance[i] + w;
    });
  }
  return mu;
}

struct ResidualReport {
  /// max over paths and steps of |residual_k|
  double sup = 0.0;
  double rms = 0.0;
  /// max over paths and k of |sum_{i >= k} residual_i|
  double cumulative_sup = 0.0;
};

/// residual_k = p_{k+1} - p_k + E[mu|F]_k h - q_k dB_k - sum r_k(zeta) + h int r_k dnu.
inline ResidualReport bsde_residual_1d(const Ensemble& e, const std::vector<AdjointTriple>& adj,
                                       const CoefficientModel& model, const MalliavinSource& src,
                                       const BasisSpec& basis = {}) {
  const auto mu = mu_generalized(e, adj, model, src, basis);
  const TimeGrid& g = e.grid;
  const std::size_t n = g.steps();
  const std::size_t m = g.zero_index();
  const double h = g.step();
  const bool jumps = model.jumps.active();
  std::vector<double> sup(e.size()), cum(e.size()), sq(e.size());
  parallel_for(e.size(), [&](std::size_t i) {
    const AdjointTriple& a = adj[i];
    std::vector<double> res(n);
    double s2 = 0.0, smax = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double r = a.p[j + 1] - a.p[j] + mu[i][j] * h - a.q[j] * e.noises[i].dB(m + j);
      if (jumps) {
        for (double z : e.noises[i].jumps(m + j)) r -= a.r[j](z);
        r += h * model.jumps.levy_integral(a.r[j]);
      }
      res[j] = r;
      s2 += r * r;
      smax = std::max(smax, std::abs(r));
    }
    double acc = 0.0, cmax = 0.0;
    for (std::size_t j = n; j-- > 0;) {
      acc += res[j];
      cmax = std::max(cmax, std::abs(acc));
    }
    sup[i] = smax;
    cum[i] = cmax;
    sq[i] = s2 / static_cast<double>(n);
  });
  ResidualReport out;
  for (std::size_t i = 0; i < e.size(); ++i) {
    out.sup = std::max(out.sup, sup[i]);
    out.cumulative_sup = std::max(out.cumulative_sup, cum[i]);
  }
  out.rms = std::sqrt(pairwise_sum(sq) / static_cast<double>(std::max<std::size_t>(e.size(), 1)));
  return out;
}

struct ResidualOrder {
  ResidualReport coarse;
  ResidualReport fine;
  double order = 0.0;
  double cumulative_order = 0.0;
};

/// Residual of an adjoint family at m and 2m steps per delay. The coarse
/// ensemble uses the fine noise coarsened by two (common random numbers).
/// `make` returns, for a grid, the adjoint of one path and the Malliavin
/// source of dH/dz on that grid.
struct AdjointFamily {
  std::function<AdjointTriple(const NoisePath&)> adjoint;
  MalliavinSource source;
};

inline ResidualOrder residual_order(const CoefficientModel& model,
                                    const std::function<AdjointFamily(const TimeGrid&)>& make,
                                    const TimeGrid& coarse_grid, std::size_t n_paths, std::uint64_t seed,
                                    double control = 0.5, const std::optional<MemoryKernel>& kernel = std::nullopt) {
  const TimeGrid fine_grid =
      make_grid(coarse_grid.delta(), coarse_grid.horizon(), 2 * coarse_grid.steps_per_delay());
  std::vector<NoisePath> fine(n_paths), coarse(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    fine[i] = sample_noise(fine_grid, model.jumps, seed, i);
    coarse[i] = fine[i].coarsen(2);
  });
  auto run = [&](const TimeGrid& g, std::vector<NoisePath> noises) {
    const AdjointFamily fam = make(g);
    const Ensemble e = ensemble_from_noises(model, ControlPath::constant(g, control), std::move(noises), kernel);
    std::vector<AdjointTriple> adj(e.size());
    parallel_for(e.size(), [&](std::size_t i) { adj[i] = fam.adjoint(e.noises[i]); });
    return bsde_residual_1d(e, adj, model, fam.source);
  };
  ResidualOrder out;
  out.coarse = run(coarse_grid, std::move(coarse));
  out.fine = run(fine_grid, std::move(fine));
  out.order = std::log2(out.coarse.sup / out.fine.sup);
  out.cumulative_order = std::log2(out.coarse.cumulative_sup / out.fine.cumulative_sup);
  return out;
}

inline ResidualOrder closed_form_residual_order(const CoefficientModel& model,
                                                const std::function<LinearBSDESpec(const TimeGrid&)>& spec,
                                                const TimeGrid& coarse_grid, std::size_t n_paths, std::uint64_t seed,
                                                double control = 0.5) {
  return residual_order(
      model,
      [&](const TimeGrid& g) {
        auto cf = std::make_shared<LinearClosedForm>(solve_linear_closed_form(spec(g)));
        auto src = MalliavinSource::chaos1(std::vector<double>(g.steps() + 1, cf->spec.a0), cf->family());
        return AdjointFamily{[cf](const NoisePath& n) { return cf->adjoint(n); }, std::move(src)};
      },
      coarse_grid, n_paths, seed, control);
}

/// p(t) = exp(a1 (T - t)), q = r = 0, mu = a1 p: the adjoint of the
/// consumption model, with or without a memory kernel.
inline AdjointTriple exponential_adjoint(const TimeGrid& g, double a1) {
  const std::size_t n = g.steps();
  AdjointTriple a{g, std::vector<double>(n + 1), std::vector<double>(n + 1, 0.0), std::vector<MarkFunction>(n + 1),
                  std::vector<double>(n + 1)};
  for (std::size_t j = 0; j <= n; ++j) {
    a.p[j] = std::exp(a1 * (g.horizon() - g.time(g.zero_index() + j)));
    a.mu[j] = a1 * a.p[j];
  }
  return a;
}

/// Family of exponential_adjoint with dH/dz = a0 p (deterministic).
inline AdjointFamily exponential_family(const TimeGrid& g, double a0, double a1) {
  AdjointTriple a = exponential_adjoint(g, a1);
  std::vector<double> dz(a.p.size());
  for (std::size_t j = 0; j < dz.size(); ++j) dz[j] = a0 * a.p[j];
  return {[a](const NoisePath&) { return a; }, MalliavinSource::deterministic(std::move(dz))};
}

// ---------------------------------------------------------------------------
// 2D time-advanced BSDE

struct AbsdeSolution {
  std::vector<Adjoint2D> paths;
  /// Largest regression condition number met in the sweep.
  double max_condition = 1.0;
};

/// Explicit backward regression scheme. At each node t_k:
/// E[p(t_{k+1}) | F] by regression; q by regressing (p(t_{k+1}) - fit) dB / h;
/// r affine in zeta from the compensated jump increments; then
/// p(t_k) = E[p(t_{k+1})] + mu h with
/// mu1 = q2 + dH/dx(t) + E[dH/dy(t + delta)] 1{t + delta <= T},
/// mu2 = dH/dz(t) - E[dH/dz(t + delta)] 1{t + delta <= T}.
inline AbsdeSolution solve_absde_2d(const CoefficientModel& model, const Ensemble& e, const BasisSpec& basis = {}) {
  const TimeGrid& g = e.grid;
  const std::size_t n = g.steps();
  const std::size_t m = g.zero_index();
  const std::size_t paths = e.size();
  const double h = g.step();
  if (paths < 10 * basis.size())
    throw Error(ErrorKind::InvalidArgument, "need at least ten paths per basis function");
  if (e.kernel && !e.kernel->unit)
    throw Error(ErrorKind::KernelNotReducible, "the 2D equation needs the plain memory");

  const bool jumps = model.jump && model.jumps.active();
  const double lambda = model.jumps.intensity;
  const auto& marks = model.jumps.marks;
  const bool affine_marks = marks.sd() > 0.0;

  AbsdeSolution sol;
  sol.paths.resize(paths);
  for (std::size_t i = 0; i < paths; ++i) {
    Adjoint2D& a = sol.paths[i];
    a.grid = g;
    a.p1.assign(n + 1, 0.0);
    a.p2.assign(n + 1, 0.0);
    a.q1.assign(n + 1, 0.0);
    a.q2.assign(n + 1, 0.0);
    a.r1.assign(n + 1, {});
    a.r2.assign(n + 1, {});
    a.mu1.assign(n + 1, 0.0);
    a.mu2.assign(n + 1, 0.0);
    a.p1[n] = model.weight(e.noises[i]) * model.g_prime(e.states[i].terminal());
  }
  auto grad_at = [&](std::size_t i, std::size_t j, double p1) {
    const StatePoint pt = e.states[i].point(j, e.control(i)[j]);
    return hamiltonian(pt, p1, sol.paths[i].q1[j], sol.paths[i].r1[j], model).grad;
  };

  std::vector<double> y(paths), dB(paths), j0(paths), j1(paths);
  for (std::size_t j = n; j-- > 0;) {
    const Regression reg(detail::features_at(e, j, basis), basis);
    sol.max_condition = std::max(sol.max_condition, reg.condition_number());
    for (std::size_t i = 0; i < paths; ++i) {
      dB[i] = e.noises[i].dB(m + j);
      if (jumps) {
        const auto js = e.noises[i].jumps(m + j);
        j0[i] = static_cast<double>(js.size()) - h * lambda;
        double s = 0.0;
        for (double z : js) s += z;
        j1[i] = s - h * lambda * marks.moment(1);
      }
    }
    auto project = [&](auto member_p, auto member_q, auto member_r, std::vector<double>& expected) {
      for (std::size_t i = 0; i < paths; ++i) y[i] = (sol.paths[i].*member_p)[j + 1];
      expected = reg.fit(y);
      std::vector<double> w(paths);
      for (std::size_t i = 0; i < paths; ++i) w[i] = (y[i] - expected[i]) * dB[i] / h;
      const auto q = reg.fit(w);
      for (std::size_t i = 0; i < paths; ++i) (sol.paths[i].*member_q)[j] = q[i];
      if (!jumps || member_r == nullptr) return;
      for (std::size_t i = 0; i < paths; ++i) w[i] = (y[i] - expected[i]) * j0[i] / (h * lambda);
      const auto c0 = reg.fit(w);
      std::vector<double> c1(paths, 0.0);
      if (affine_marks) {
        for (std::size_t i = 0; i < paths; ++i) w[i] = (y[i] - expected[i]) * j1[i] / (h * lambda);
        c1 = reg.fit(w);
      }
      const double m0 = 1.0, m1 = marks.moment(1), m2 = marks.moment(2);
      for (std::size_t i = 0; i < paths; ++i) {
        MarkFunction r;
        if (affine_marks) {
          // [m0 m1; m1 m2] (c0, c1) = (E[r], E[r zeta])
          const double det = m0 * m2 - m1 * m1;
          r.c0 = (m2 * c0[i] - m1 * c1[i]) / det;
          r.c1 = (m0 * c1[i] - m1 * c0[i]) / det;
        } else {
          r.c0 = c0[i];
        }
        (sol.paths[i].*member_r)[j] = r;
      }
    };
    std::vector<double> e1, e2;
    project(&Adjoint2D::p1, &Adjoint2D::q1, &Adjoint2D::r1, e1);
    // r2 vanishes: X2 has no jump component
    project(&Adjoint2D::p2, &Adjoint2D::q2, static_cast<std::vector<MarkFunction> Adjoint2D::*>(nullptr), e2);

    std::vector<double> adv_y(paths, 0.0), adv_z(paths, 0.0);
    if (j + m <= n) {
      for (std::size_t i = 0; i < paths; ++i) {
        const Partials gr = grad_at(i, j + m, sol.paths[i].p1[j + m]);
        adv_y[i] = gr.y;
        adv_z[i] = gr.z;
      }
      adv_y = reg.fit(adv_y);
      adv_z = reg.fit(adv_z);
    }
    parallel_for(paths, [&](std::size_t i) {
      Adjoint2D& a = sol.paths[i];
      const Partials gr = grad_at(i, j, e1[i]);
      a.mu1[j] = a.q2[j] + gr.x + adv_y[i];
      a.mu2[j] = gr.z - adv_z[i];
      a.p1[j] = e1[i] + a.mu1[j] * h;
      a.p2[j] = e2[i] + a.mu2[j] * h;
      if (j + 1 == n) {
        a.q1[n] = a.q1[j];
        a.q2[n] = a.q2[j];
        a.r1[n] = a.r1[j];
        a.r2[n] = a.r2[j];
      }
    });
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Bridges between the two formulations

/// (p1, q1, r1, mu1) of every path: the 1D view of a 2D solution.
inline std::vector<AdjointTriple> first_components(const AbsdeSolution& sol) {
  std::vector<AdjointTriple> out;
  out.reserve(sol.paths.size());
  for (const auto& a : sol.paths) out.push_back({a.grid, a.p1, a.q1, a.r1, a.mu1});
  return out;
}

struct BridgeResult {
  AdjointTriple adjoint;
  std::vector<double> q2_reconstructed;
  double q2_max_deviation = 0.0;
};

/// (p, q, r) := (p1, q1, r1); q2 rebuilt from the Malliavin window and
/// compared with the regressed q2.
inline BridgeResult bridge_1d_from_2d(const Adjoint2D& a, const MalliavinSource& src, std::size_t path,
                                      const NoisePath& noise) {
  BridgeResult out;
  out.adjoint = {a.grid, a.p1, a.q1, a.r1, a.mu1};
  const std::size_t n = a.grid.steps();
  out.q2_reconstructed.assign(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    out.q2_reconstructed[j] = window_malliavin(src, path, noise, j);
    out.q2_max_deviation = std::max(out.q2_max_deviation, std::abs(out.q2_reconstructed[j] - a.q2[j]));
  }
  return out;
}

struct LiftResult {
  Adjoint2D adjoint;
  /// max_k |p2_{k+1} - p2_k + mu2_k h - q2_k dB_k|
  double p2_residual = 0.0;
};

/// p1 := p, q1 := q, r1 := r, r2 := 0 and
/// p2(t) = int_t^{t+delta} E[dH/dz(s) | F_t] 1 ds, q2(t) = int_t^{t+delta} E[D_t dH/dz(s) | F_t] 1 ds.
inline LiftResult lift_2d_from_1d(const AdjointTriple& adj, const MalliavinSource& src, std::size_t path,
                                  const NoisePath& noise) {
  const TimeGrid& g = adj.grid;
  const std::size_t n = g.steps();
  const std::size_t m = g.zero_index();
  const double h = g.step();
  LiftResult out;
  Adjoint2D& a = out.adjoint;
  a.grid = g;
  a.p1 = adj.p;
  a.q1 = adj.q;
  a.r1 = adj.r;
  a.mu1 = adj.mu;
  a.r2.assign(n + 1, {});
  a.p2.assign(n + 1, 0.0);
  a.q2.assign(n + 1, 0.0);
  a.mu2.assign(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    a.p2[j] = window_expectation(src, path, noise, j);
    a.q2[j] = window_malliavin(src, path, noise, j);
    const double now = src.conditional_expectation(path, noise, j, j);
    const double ahead = j + m <= n ? src.conditional_expectation(path, noise, j, j + m) : 0.0;
    a.mu2[j] = now - ahead;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double r = a.p2[j + 1] - a.p2[j] + a.mu2[j] * h - a.q2[j] * noise.dB(m + j);
    out.p2_residual = std::max(out.p2_residual, std::abs(r));
  }
  return out;
}

/// CSV with columns t, p, q, mu (ensemble means) followed by path 0.
inline void write_adjoint_csv(std::ostream& os, const std::vector<AdjointTriple>& adj) {
  os << "t,p_mean,q_mean,mu_mean,p_path0,q_path0,mu_path0\n";
  if (adj.empty()) return;
  os.precision(17);
  const TimeGrid& g = adj.front().grid;
  const std::size_t n = g.steps();
  std::vector<double> buf(adj.size());
  auto mean = [&](auto member, std::size_t j) {
    for (std::size_t i = 0; i < adj.size(); ++i) buf[i] = (adj[i].*member)[j];
    return pairwise_sum(buf) / static_cast<double>(adj.size());
  };
  for (std::size_t j = 0; j <= n; ++j) {
    os << g.time(g.zero_index() + j) << ',' << mean(&AdjointTriple::p, j) << ',' << mean(&AdjointTriple::q, j) << ','
       << mean(&AdjointTriple::mu, j) << ',' << adj[0].p[j] << ',' << adj[0].q[j] << ',' << adj[0].mu[j] << '\n';
  }
}

}  // namespace noisymem
