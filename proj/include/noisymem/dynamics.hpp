#pragma once

// Forward simulation of the controlled jump-diffusion with discrete delay
// and noisy memory, its two-dimensional discrete-delay reduction, and
// Monte-Carlo evaluation of the performance functional.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <utility>
#include <vector>

#include "noisymem/error.hpp"
#include "noisymem/parallel.hpp"
#include "noisymem/paths.hpp"
#include "noisymem/stats.hpp"

namespace noisymem {

/// Arguments of every coefficient: time, state, delayed state, memory, control.
struct StatePoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double u = 0.0;
};

/// Partial derivatives with respect to (x, y, z, u).
struct Partials {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double u = 0.0;

  double dot(double kx, double ky, double kz, double eta) const noexcept {
    return x * kx + y * ky + z * kz + u * eta;
  }
  Partials& operator+=(const Partials& o) noexcept {
    x += o.x; y += o.y; z += o.z; u += o.u;
    return *this;
  }
  Partials operator*(double s) const noexcept { return {x * s, y * s, z * s, u * s}; }
};

using ScalarField = std::function<double(const StatePoint&)>;
using JumpField = std::function<double(const StatePoint&, double)>;
using PartialsField = std::function<Partials(const StatePoint&)>;
using JumpPartialsField = std::function<Partials(const StatePoint&, double)>;

/// Admissible control values: an interval, possibly unbounded or open at an end.
struct ControlSet {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool lower_open = false;
  bool upper_open = false;

  static ControlSet real_line() { return {}; }
  static ControlSet closed(double lo, double hi) { return {lo, hi, false, false}; }
  static ControlSet positive() { return {0.0, std::numeric_limits<double>::infinity(), true, false}; }
  static ControlSet point(double v) { return {v, v, false, false}; }

  bool contains(double v) const noexcept {
    const bool lo_ok = lower_open ? v > lower : v >= lower;
    const bool hi_ok = upper_open ? v < upper : v <= upper;
    return lo_ok && hi_ok;
  }
  bool is_singleton() const noexcept { return lower == upper; }
  bool is_bounded() const noexcept { return std::isfinite(lower) && std::isfinite(upper); }
  bool is_closed_interval() const noexcept { return is_bounded() && !lower_open && !upper_open; }
  double clamp(double v) const noexcept { return std::min(std::max(v, lower), upper); }
};

inline double central_difference_bump(double value) noexcept { return 1e-5 * (1.0 + std::abs(value)); }

/// Coefficients b, sigma, gamma, payoffs f, g and their gradients.
///
/// Empty gradient evaluators fall back to central differences. The caller
/// is responsible for the Lipschitz and linear-growth conditions that
/// guarantee well-posedness; they cannot be verified here.
struct CoefficientModel {
  ScalarField drift;
  ScalarField diffusion;
  JumpField jump;      // empty: no jump coefficient
  ScalarField running; // empty: f = 0
  std::function<double(double)> terminal;             // empty: g = 0
  std::function<double(double)> terminal_derivative;  // empty: finite differences of g
  /// Positive pathwise factor multiplying g, e.g. a lognormal terminal price.
  std::function<double(const NoisePath&)> terminal_weight;
  std::function<double(double)> initial = [](double) { return 0.0; };

  PartialsField drift_partials;
  PartialsField diffusion_partials;
  JumpPartialsField jump_partials;
  PartialsField running_partials;

  JumpSpec jumps;
  ControlSet controls;

  double b(const StatePoint& p) const { return drift ? drift(p) : 0.0; }
  double sigma(const StatePoint& p) const { return diffusion ? diffusion(p) : 0.0; }
  double gamma(const StatePoint& p, double zeta) const { return jump ? jump(p, zeta) : 0.0; }
  double f(const StatePoint& p) const { return running ? running(p) : 0.0; }
  double g(double x) const { return terminal ? terminal(x) : 0.0; }

  double weight(const NoisePath& noise) const { return terminal_weight ? terminal_weight(noise) : 1.0; }

  double g_prime(double x) const {
    if (terminal_derivative) return terminal_derivative(x);
    if (!terminal) return 0.0;
    const double e = central_difference_bump(x);
    return (terminal(x + e) - terminal(x - e)) / (2.0 * e);
  }

  /// Integral of gamma(p, .) against the Levy measure.
  double jump_compensator(const StatePoint& p) const {
    if (!jump || !jumps.active()) return 0.0;
    return jumps.levy_integral([&](double z) { return jump(p, z); });
  }

  Partials grad_b(const StatePoint& p) const { return partials_of(drift_partials, drift, p); }
  Partials grad_sigma(const StatePoint& p) const { return partials_of(diffusion_partials, diffusion, p); }
  Partials grad_f(const StatePoint& p) const { return partials_of(running_partials, running, p); }
  Partials grad_gamma(const StatePoint& p, double zeta) const {
    if (jump_partials) return jump_partials(p, zeta);
    if (!jump) return {};
    return finite_difference([&](const StatePoint& q) { return jump(q, zeta); }, p);
  }
  /// Integral of grad gamma against nu weighted by r(zeta).
  template <typename R>
  Partials levy_grad_gamma(const StatePoint& p, R&& r) const {
    Partials acc;
    if (!jump || !jumps.active()) return acc;
    acc.x = jumps.levy_integral([&](double z) { return grad_gamma(p, z).x * r(z); });
    acc.y = jumps.levy_integral([&](double z) { return grad_gamma(p, z).y * r(z); });
    acc.z = jumps.levy_integral([&](double z) { return grad_gamma(p, z).z * r(z); });
    acc.u = jumps.levy_integral([&](double z) { return grad_gamma(p, z).u * r(z); });
    return acc;
  }

  template <typename Fn>
  static Partials finite_difference(Fn&& fn, const StatePoint& p) {
    Partials d;
    auto bump = [&](double StatePoint::*field) {
      const double e = central_difference_bump(p.*field);
      StatePoint up = p, dn = p;
      up.*field += e;
      dn.*field -= e;
      return (fn(up) - fn(dn)) / (2.0 * e);
    };
    d.x = bump(&StatePoint::x);
    d.y = bump(&StatePoint::y);
    d.z = bump(&StatePoint::z);
    d.u = bump(&StatePoint::u);
    return d;
  }

 private:
  static Partials partials_of(const PartialsField& analytic, const ScalarField& fn, const StatePoint& p) {
    if (analytic) return analytic(p);
    if (!fn) return {};
    return finite_difference(fn, p);
  }
};

/// Result of comparing analytic gradients with central differences.
struct GradientCheck {
  bool ok = true;
  double worst_relative_error = 0.0;
  std::string worst_field;
  StatePoint worst_point;
};

/// Compares every supplied analytic gradient with central differences
/// (bump 1e-5, relative tolerance 1e-4) at random points.
inline GradientCheck check_gradients(const CoefficientModel& model, std::size_t samples = 64,
                                     std::uint64_t seed = 7, double scale = 1.0) {
  GradientCheck out;
  auto fd = [](auto&& fn, const StatePoint& p) {
    Partials d;
    auto bump = [&](double StatePoint::*field) {
      StatePoint up = p, dn = p;
      up.*field += 1e-5;
      dn.*field -= 1e-5;
      return (fn(up) - fn(dn)) / 2e-5;
    };
    d.x = bump(&StatePoint::x);
    d.y = bump(&StatePoint::y);
    d.z = bump(&StatePoint::z);
    d.u = bump(&StatePoint::u);
    return d;
  };
  auto compare = [&](const char* name, const Partials& a, const Partials& n, const StatePoint& p) {
    const double pairs[4][2] = {{a.x, n.x}, {a.y, n.y}, {a.z, n.z}, {a.u, n.u}};
    for (const auto& pr : pairs) {
      const double err = std::abs(pr[0] - pr[1]) / std::max(1.0, std::abs(pr[1]));
      if (err > out.worst_relative_error) {
        out.worst_relative_error = err;
        out.worst_field = name;
        out.worst_point = p;
      }
    }
  };
  for (std::size_t i = 0; i < samples; ++i) {
    const rng::CounterKey key{seed, 0x6772616473ULL, i};
    StatePoint p;
    p.t = rng::uniform_open(key, 0);
    p.x = scale * rng::standard_normal(key, 1);
    p.y = scale * rng::standard_normal(key, 2);
    p.z = scale * rng::standard_normal(key, 3);
    p.u = model.controls.is_bounded()
              ? model.controls.lower + (model.controls.upper - model.controls.lower) * rng::uniform_open(key, 8)
              : (model.controls.lower_open && model.controls.lower == 0.0 ? 0.1 + 2.0 * rng::uniform_open(key, 8)
                                                                          : scale * rng::standard_normal(key, 5));
    if (model.drift_partials && model.drift) compare("drift", model.drift_partials(p), fd(model.drift, p), p);
    if (model.diffusion_partials && model.diffusion)
      compare("diffusion", model.diffusion_partials(p), fd(model.diffusion, p), p);
    if (model.running_partials && model.running)
      compare("running", model.running_partials(p), fd(model.running, p), p);
    if (model.jump_partials && model.jump) {
      const double zeta = rng::standard_normal(key, 6);
      compare("jump", model.jump_partials(p, zeta), fd([&](const StatePoint& q) { return model.jump(q, zeta); }, p), p);
    }
    if (model.terminal_derivative && model.terminal) {
      const double x = p.x;
      const double num = (model.terminal(x + 1e-5) - model.terminal(x - 1e-5)) / 2e-5;
      const double err = std::abs(model.terminal_derivative(x) - num) / std::max(1.0, std::abs(num));
      if (err > out.worst_relative_error) {
        out.worst_relative_error = err;
        out.worst_field = "terminal";
        out.worst_point = p;
      }
    }
  }
  out.ok = out.worst_relative_error <= 1e-4;
  return out;
}

/// Deterministic weight phi(t, s) of the generalised memory
/// Z'(t) = int_{t-delta}^t phi(t, s) X(s) dB(s).
struct MemoryKernel {
  std::function<double(double, double)> phi = [](double, double) { return 1.0; };
  double bound = 1.0;
  /// phi == 1 identically; the memory then coincides with the plain one.
  bool unit = true;

  static MemoryKernel unit_kernel() { return {}; }
  static MemoryKernel from(std::function<double(double, double)> fn, double sup_bound) {
    return {std::move(fn), sup_bound, false};
  }
  /// phi(t, s) = (s - t + delta) / delta, rising from 0 to 1 across the window.
  static MemoryKernel linear_ramp(double delta) {
    return from([delta](double t, double s) { return (s - t + delta) / delta; }, 1.0);
  }

  double operator()(double t, double s) const { return unit ? 1.0 : phi(t, s); }
};

enum class InformationModel {
  Full,     // controls adapted to the full filtration
  Trivial,  // deterministic controls
};

/// Control values on the nodes of [0, T], indexed j = 0..N.
struct ControlPath {
  TimeGrid grid;
  std::vector<double> values;
  InformationModel information = InformationModel::Trivial;

  static ControlPath constant(const TimeGrid& grid, double v,
                              InformationModel info = InformationModel::Trivial) {
    return {grid, std::vector<double>(grid.steps() + 1, v), info};
  }
  template <typename Fn>
  static ControlPath from_function(const TimeGrid& grid, Fn&& fn,
                                   InformationModel info = InformationModel::Trivial) {
    ControlPath c{grid, std::vector<double>(grid.steps() + 1), info};
    for (std::size_t j = 0; j <= grid.steps(); ++j) c.values[j] = fn(grid.time(grid.zero_index() + j));
    return c;
  }

  double operator[](std::size_t j) const { return values[j]; }
  std::size_t size() const noexcept { return values.size(); }

  ControlPath plus(const ControlPath& direction, double s) const {
    ControlPath out = *this;
    for (std::size_t j = 0; j < values.size(); ++j) out.values[j] += s * direction.values[j];
    return out;
  }
  ControlPath scaled(double s) const {
    ControlPath out = *this;
    for (double& v : out.values) v *= s;
    return out;
  }
};

/// One control shared by every path, or one per path (full information).
struct ControlPlan {
  std::vector<ControlPath> paths;

  ControlPlan(const ControlPath& single) : paths{single} {}  // NOLINT: implicit by design of call sites
  explicit ControlPlan(std::vector<ControlPath> per_path) : paths(std::move(per_path)) {}

  const ControlPath& for_path(std::size_t i) const { return paths.size() == 1 ? paths.front() : paths.at(i); }
  const TimeGrid& grid() const { return paths.front().grid; }
};

/// Paths of one simulation. x and x2 live on all nodes of [-delta, T]
/// (index k); y, z and z_general live on [0, T] (index j = k - m).
struct StateBundle {
  TimeGrid grid;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> z;
  std::optional<std::vector<double>> z_general;
  std::optional<std::vector<double>> x2;

  /// X at the node j steps after time 0.
  double x_at(std::size_t j) const { return x[j + grid.zero_index()]; }
  /// The memory argument fed to the coefficients.
  double memory(std::size_t j) const { return z_general ? (*z_general)[j] : z[j]; }
  StatePoint point(std::size_t j, double u) const {
    return {grid.time(grid.zero_index() + j), x_at(j), y[j], memory(j), u};
  }
  double terminal() const { return x.back(); }
};

namespace detail {

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
  if (!(a == b)) throw Error(ErrorKind::GridMismatch, std::string(what) + " lives on a different grid");
}

inline void require_finite(double v, std::size_t k, const TimeGrid& g) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "state became non-finite at t = " << g.time(k);
    throw Error(ErrorKind::NonFiniteState, os.str());
  }
}

/// Euler-Maruyama recursion shared by the 1D simulation and the 2D reduction.
/// The memory is the difference of the running Ito integral
/// X2(t) = int_{-delta}^t X dB, so Z(t_k) = X2(t_k) - X2(t_{k-m}) holds
/// bit-for-bit in both routes.
inline StateBundle simulate(const CoefficientModel& model, const ControlPath& control, const NoisePath& noise,
                            const MemoryKernel* kernel, bool keep_x2) {
  const TimeGrid& g = noise.grid();
  require_same_grid(control.grid, g, "control");
  if (control.values.size() != g.steps() + 1)
    throw Error(ErrorKind::InvalidArgument, "control must have one value per node of [0, T]");
  const std::size_t m = g.zero_index();
  const std::size_t n = g.steps();
  const std::size_t total = g.total_steps();
  const double h = g.step();
  const bool general = kernel != nullptr && !kernel->unit;

  StateBundle s;
  s.grid = g;
  s.x.assign(total + 1, 0.0);
  std::vector<double> x2(total + 1, 0.0);
  s.y.assign(n + 1, 0.0);
  s.z.assign(n + 1, 0.0);
  if (kernel != nullptr) s.z_general.emplace(n + 1, 0.0);

  for (std::size_t k = 0; k <= m; ++k) s.x[k] = model.initial(g.time(k));
  for (std::size_t k = 0; k < m; ++k) x2[k + 1] = x2[k] + s.x[k] * noise.dB(k);

  for (std::size_t k = m;; ++k) {
    const std::size_t j = k - m;
    s.y[j] = s.x[k - m];
    s.z[j] = x2[k] - x2[k - m];
    if (kernel != nullptr) {
      if (general) {
        const double t = g.time(k);
        double acc = 0.0;
        for (std::size_t i = k - m; i < k; ++i) {
          const double w = (*kernel)(t, g.time(i));
          if (std::abs(w) > kernel->bound * (1.0 + 1e-12))
            throw Error(ErrorKind::InvalidArgument, "memory kernel exceeds its declared bound");
          acc += w * s.x[i] * noise.dB(i);
        }
        (*s.z_general)[j] = acc;
      } else {
        (*s.z_general)[j] = s.z[j];
      }
    }
    if (k == total) break;

    const StatePoint p{g.time(k), s.x[k], s.y[j], s.memory(j), control.values[j]};
    double next = s.x[k] + model.b(p) * h + model.sigma(p) * noise.dB(k);
    if (model.jump && model.jumps.active()) {
      for (double zeta : noise.jumps(k)) next += model.gamma(p, zeta);
      next -= h * model.jump_compensator(p);
    }
    require_finite(next, k + 1, g);
    s.x[k + 1] = next;
    x2[k + 1] = x2[k] + s.x[k] * noise.dB(k);
  }
  if (keep_x2) s.x2 = std::move(x2);
  return s;
}

}  // namespace detail

/// Euler-Maruyama simulation of the state, its delay and (generalised) memory.
inline StateBundle simulate_state(const CoefficientModel& model, const ControlPath& control, const NoisePath& noise,
                                  const std::optional<MemoryKernel>& kernel = std::nullopt) {
  return detail::simulate(model, control, noise, kernel ? &*kernel : nullptr, false);
}

/// Two-dimensional discrete-delay form: dX1 as above with memory X2(t) - X2(t - delta),
/// dX2 = X1 dB, X2(t) = int_{-delta}^t xi dB on the initial segment. Only valid for
/// the plain memory.
inline StateBundle reduce_2d(const CoefficientModel& model, const ControlPath& control, const NoisePath& noise,
                             const std::optional<MemoryKernel>& kernel = std::nullopt) {
  if (kernel && !kernel->unit)
    throw Error(ErrorKind::KernelNotReducible, "a time-dependent memory kernel has no 2D discrete-delay form");
  return detail::simulate(model, control, noise, nullptr, true);
}

/// Simulated paths sharing one model and control plan.
struct Ensemble {
  TimeGrid grid;
  std::vector<NoisePath> noises;
  std::vector<StateBundle> states;
  ControlPlan controls;
  std::optional<MemoryKernel> kernel;

  std::size_t size() const noexcept { return states.size(); }
  const ControlPath& control(std::size_t i) const { return controls.for_path(i); }
};

/// Simulates one path per supplied noise (e.g. coarsened copies of a finer ensemble).
inline Ensemble ensemble_from_noises(const CoefficientModel& model, const ControlPlan& controls,
                                     std::vector<NoisePath> noises,
                                     const std::optional<MemoryKernel>& kernel = std::nullopt, bool keep_x2 = false) {
  Ensemble e{controls.grid(), std::move(noises), {}, controls, kernel};
  for (const auto& n : e.noises) detail::require_same_grid(n.grid(), e.grid, "noise");
  e.states.resize(e.noises.size());
  parallel_for(e.noises.size(), [&](std::size_t i) {
    e.states[i] = detail::simulate(model, controls.for_path(i), e.noises[i], kernel ? &*kernel : nullptr, keep_x2);
  });
  return e;
}

/// Simulates paths 0..n_paths-1 of `seed`; path i always sees the same noise.
inline Ensemble simulate_ensemble(const CoefficientModel& model, const ControlPlan& controls, std::size_t n_paths,
                                  std::uint64_t seed, const std::optional<MemoryKernel>& kernel = std::nullopt,
                                  bool keep_x2 = false) {
  std::vector<NoisePath> noises(n_paths);
  parallel_for(n_paths, [&](std::size_t i) { noises[i] = sample_noise(controls.grid(), model.jumps, seed, i); });
  return ensemble_from_noises(model, controls, std::move(noises), kernel, keep_x2);
}

/// Realised payoff  sum_j f(t_j, ...) h + G g(X(T))  of one path (left-point rule).
inline double path_payoff(const CoefficientModel& model, const StateBundle& state, const ControlPath& control,
                          const NoisePath& noise) {
  const std::size_t n = state.grid.steps();
  const double h = state.grid.step();
  double running = 0.0;
  if (model.running) {
    for (std::size_t j = 0; j < n; ++j) running += model.f(state.point(j, control.values[j])) * h;
  }
  return running + model.weight(noise) * model.g(state.terminal());
}

inline std::vector<double> payoff_samples(const CoefficientModel& model, const ControlPlan& controls,
                                          std::size_t n_paths, std::uint64_t seed,
                                          const std::optional<MemoryKernel>& kernel = std::nullopt) {
  std::vector<double> out(n_paths);
  const TimeGrid grid = controls.grid();
  parallel_for(n_paths, [&](std::size_t i) {
    const NoisePath noise = sample_noise(grid, model.jumps, seed, i);
    const ControlPath& c = controls.for_path(i);
    const StateBundle s = detail::simulate(model, c, noise, kernel ? &*kernel : nullptr, false);
    out[i] = path_payoff(model, s, c, noise);
  });
  return out;
}

/// Monte-Carlo estimate of J with its standard error.
inline Estimate performance(const CoefficientModel& model, const ControlPlan& controls, std::size_t n_paths,
                            std::uint64_t seed, const std::optional<MemoryKernel>& kernel = std::nullopt) {
  if (n_paths < 2) throw Error(ErrorKind::InvalidArgument, "performance needs at least two paths");
  const auto samples = payoff_samples(model, controls, n_paths, seed, kernel);
  return estimate(samples);
}

/// CSV dump with columns t, X, Y, Z, Zp, X2 (empty cells where undefined).
inline void write_state_csv(std::ostream& os, const StateBundle& s) {
  os << "t,X,Y,Z,Zp,X2\n";
  os.precision(17);
  const std::size_t m = s.grid.zero_index();
  for (std::size_t k = 0; k < s.x.size(); ++k) {
    os << s.grid.time(k) << ',' << s.x[k] << ',';
    if (k >= m) {
      const std::size_t j = k - m;
      os << s.y[j] << ',' << s.z[j] << ',';
      if (s.z_general) os << (*s.z_general)[j];
    } else {
      os << ",,";
    }
    os << ',';
    if (s.x2) os << (*s.x2)[k];
    os << '\n';
  }
}

}  // namespace noisymem
