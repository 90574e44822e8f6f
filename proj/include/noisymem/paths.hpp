#pragma once

// Time grids, reproducible noise paths and left-point Ito quadrature.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "noisymem/error.hpp"
#include "noisymem/rng.hpp"

namespace noisymem {

/// Uniform grid on [-delta, T] with step h = delta / m. Node k sits at
/// t_k = (k - m) h, so node m is exactly 0 and every delay shift is an
/// index shift of m.
class TimeGrid {
 public:
  TimeGrid() = default;

  TimeGrid(double delta, double horizon, std::size_t steps_per_delay)
      : delta_(delta), horizon_(horizon), m_(steps_per_delay) {
    if (!(delta > 0.0) || !(horizon > 0.0) || steps_per_delay == 0)
      throw Error(ErrorKind::InvalidArgument, "grid needs delta > 0, horizon > 0, m >= 1");
    h_ = delta / static_cast<double>(m_);
    const double ratio = horizon / h_;
    const double n = std::round(ratio);
    if (n < 1.0 || std::abs(n * h_ - horizon) > 1e-9 * h_) {
      std::ostringstream os;
      os << "horizon " << horizon << " is not an integer multiple of step " << h_
         << " (delta " << delta << ", m " << m_ << ")";
      throw Error(ErrorKind::NonCommensurate, os.str());
    }
    n_ = static_cast<std::size_t>(n);
  }

  double delta() const noexcept { return delta_; }
  double horizon() const noexcept { return horizon_; }
  double step() const noexcept { return h_; }
  std::size_t steps_per_delay() const noexcept { return m_; }
  /// Steps on [0, T].
  std::size_t steps() const noexcept { return n_; }
  /// Steps on [-delta, T]; node indices run over 0..total_steps().
  std::size_t total_steps() const noexcept { return m_ + n_; }
  std::size_t node_count() const noexcept { return m_ + n_ + 1; }
  std::size_t zero_index() const noexcept { return m_; }
  std::size_t horizon_index() const noexcept { return m_ + n_; }

  double time(std::size_t k) const noexcept {
    if (k == 0) return -delta_;
    if (k == m_ + n_) return horizon_;
    return (static_cast<double>(k) - static_cast<double>(m_)) * h_;
  }

  /// Node index of t; OffGrid if t is not a node within 1e-9 h.
  std::size_t index_of(double t) const {
    const double pos = t / h_ + static_cast<double>(m_);
    const double k = std::round(pos);
    if (k < 0.0 || k > static_cast<double>(total_steps()) || std::abs(pos - k) > 1e-9) {
      std::ostringstream os;
      os << "time " << t << " is not a grid node";
      throw Error(ErrorKind::OffGrid, os.str());
    }
    return static_cast<std::size_t>(k);
  }

  bool operator==(const TimeGrid& o) const noexcept {
    return delta_ == o.delta_ && horizon_ == o.horizon_ && m_ == o.m_ && n_ == o.n_;
  }

 private:
  double delta_ = 1.0;
  double horizon_ = 1.0;
  std::size_t m_ = 1;
  double h_ = 1.0;
  std::size_t n_ = 1;
};

inline TimeGrid make_grid(double delta, double horizon, std::size_t steps_per_delay) {
  return TimeGrid(delta, horizon, steps_per_delay);
}

/// Distribution of jump marks together with a quadrature rule for
/// expectations against it.
class MarkDistribution {
 public:
  enum class Kind { Constant, Normal };

  static MarkDistribution constant(double value) {
    MarkDistribution d;
    d.kind_ = Kind::Constant;
    d.a_ = value;
    d.nodes_ = {value};
    d.weights_ = {1.0};
    return d;
  }

  /// Normal(mean, sd); expectations use n-point Gauss-Hermite quadrature.
  static MarkDistribution normal(double mean, double sd, int points = 20) {
    if (!(sd >= 0.0)) throw Error(ErrorKind::InvalidArgument, "mark sd must be >= 0");
    if (sd == 0.0) return constant(mean);
    MarkDistribution d;
    d.kind_ = Kind::Normal;
    d.a_ = mean;
    d.b_ = sd;
    d.nodes_.clear();
    d.weights_.clear();
    // Golub-Welsch on the probabilists' Hermite recurrence.
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(points, points);
    for (int i = 1; i < points; ++i) {
      jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    for (int i = 0; i < points; ++i) {
      d.nodes_.push_back(mean + sd * eig.eigenvalues()(i));
      const double v = eig.eigenvectors()(0, i);
      d.weights_.push_back(v * v);
    }
    return d;
  }

  Kind kind() const noexcept { return kind_; }
  double mean() const noexcept { return a_; }
  double sd() const noexcept { return kind_ == Kind::Normal ? b_ : 0.0; }
  double moment(int k) const noexcept {
    if (k == 0) return 1.0;
    if (k == 1) return a_;
    return a_ * a_ + sd() * sd();
  }

  /// E[fn(zeta)] by quadrature (exact for polynomials of moderate degree).
  template <typename Fn>
  double expect(Fn&& fn) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * fn(nodes_[i]);
    return s;
  }

  double sample(const rng::CounterKey& key, std::uint64_t index) const {
    if (kind_ == Kind::Constant) return a_;
    return a_ + b_ * rng::standard_normal(key, index);
  }

 private:
  Kind kind_ = Kind::Constant;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<double> nodes_{0.0};
  std::vector<double> weights_{1.0};
};

/// Finite-activity (compound Poisson) Levy measure nu = intensity * marks.
struct JumpSpec {
  double intensity = 0.0;
  MarkDistribution marks = MarkDistribution::constant(0.0);

  static JumpSpec none() { return {}; }

  bool active() const noexcept { return intensity > 0.0; }

  /// Integral of zeta^k against nu.
  double levy_moment(int k) const noexcept { return intensity * marks.moment(k); }

  /// Integral of fn against nu.
  template <typename Fn>
  double levy_integral(Fn&& fn) const {
    if (!active()) return 0.0;
    return intensity * marks.expect(std::forward<Fn>(fn));
  }
};

/// One realisation of Brownian increments and jump marks on a grid.
/// Step k carries the increment over [t_k, t_{k+1}).
class NoisePath {
 public:
  NoisePath() = default;
  NoisePath(TimeGrid grid, std::vector<double> increments, std::vector<std::size_t> jump_offsets,
            std::vector<double> marks, std::uint64_t seed, std::uint64_t path_index)
      : grid_(grid),
        db_(std::move(increments)),
        offsets_(std::move(jump_offsets)),
        marks_(std::move(marks)),
        seed_(seed),
        path_(path_index) {}

  const TimeGrid& grid() const noexcept { return grid_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t path_index() const noexcept { return path_; }

  double dB(std::size_t k) const noexcept { return db_[k]; }
  std::span<const double> increments() const noexcept { return db_; }

  std::span<const double> jumps(std::size_t k) const noexcept {
    return std::span<const double>(marks_).subspan(offsets_[k], offsets_[k + 1] - offsets_[k]);
  }
  std::size_t jump_count() const noexcept { return marks_.size(); }

  /// B(t_k) - B(-delta).
  double brownian(std::size_t k) const noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += db_[i];
    return s;
  }

  /// B(t_k) - B(0) for every node with t_k >= 0, indexed by k - m.
  std::vector<double> brownian_from_zero() const {
    const std::size_t m = grid_.zero_index();
    std::vector<double> b(grid_.steps() + 1, 0.0);
    for (std::size_t j = 0; j < grid_.steps(); ++j) b[j + 1] = b[j] + db_[m + j];
    return b;
  }

  /// Sums consecutive blocks of `factor` steps; the result lives on the grid
  /// with m / factor steps per delay and sees the same Brownian path.
  NoisePath coarsen(std::size_t factor) const {
    const std::size_t m = grid_.steps_per_delay();
    if (factor == 0 || m % factor != 0)
      throw Error(ErrorKind::InvalidArgument, "coarsening factor must divide steps_per_delay");
    TimeGrid coarse(grid_.delta(), grid_.horizon(), m / factor);
    std::vector<double> db(coarse.total_steps());
    std::vector<std::size_t> offsets(coarse.total_steps() + 1, 0);
    std::vector<double> marks;
    for (std::size_t c = 0; c < coarse.total_steps(); ++c) {
      double s = 0.0;
      for (std::size_t f = c * factor; f < (c + 1) * factor; ++f) {
        s += db_[f];
        for (double z : jumps(f)) marks.push_back(z);
      }
      db[c] = s;
      offsets[c + 1] = marks.size();
    }
    return NoisePath(coarse, std::move(db), std::move(offsets), std::move(marks), seed_, path_);
  }

  /// Copy with the Brownian increment at step k shifted by `bump`.
  NoisePath with_bumped_increment(std::size_t k, double bump) const {
    NoisePath copy = *this;
    copy.db_.at(k) += bump;
    return copy;
  }

  /// Copy with all increments and jumps from step k0 onward removed.
  NoisePath truncated_after(std::size_t k0) const {
    NoisePath copy = *this;
    for (std::size_t k = k0; k < copy.db_.size(); ++k) copy.db_[k] = 0.0;
    std::vector<double> marks(marks_.begin(), marks_.begin() + static_cast<long>(offsets_[std::min(k0, db_.size())]));
    for (std::size_t k = k0; k < copy.offsets_.size(); ++k) copy.offsets_[k] = marks.size();
    copy.marks_ = std::move(marks);
    return copy;
  }

  bool operator==(const NoisePath&) const = default;

 private:
  TimeGrid grid_;
  std::vector<double> db_;
  std::vector<std::size_t> offsets_{0};
  std::vector<double> marks_;
  std::uint64_t seed_ = 0;
  std::uint64_t path_ = 0;
};

/// Deterministic noise for (grid, jumps, seed, path_index). Increments cover
/// [-delta, T] so the initial segment of the reduced second component is
/// driven too.
inline NoisePath sample_noise(const TimeGrid& grid, const JumpSpec& jumps, std::uint64_t seed,
                              std::uint64_t path_index = 0) {
  const std::size_t steps = grid.total_steps();
  const double sqrt_h = std::sqrt(grid.step());
  const double jump_mean = jumps.intensity * grid.step();
  std::vector<double> db(steps);
  std::vector<std::size_t> offsets(steps + 1, 0);
  std::vector<double> marks;
  for (std::size_t k = 0; k < steps; ++k) {
    const rng::CounterKey key{seed, path_index, k};
    db[k] = sqrt_h * rng::standard_normal(key, 0);
    if (jumps.active()) {
      const unsigned count = rng::poisson(key, 2, jump_mean);
      for (unsigned i = 0; i < count; ++i) marks.push_back(jumps.marks.sample(key, 2 + i));
    }
    offsets[k + 1] = marks.size();
  }
  return NoisePath(grid, std::move(db), std::move(offsets), std::move(marks), seed, path_index);
}

/// Left-point Ito sum  sum_{k in [a, b)} g_k dB_k  over node indices.
/// `integrand` is indexed by grid node.
inline double ito_integral(std::span<const double> integrand, const NoisePath& noise, std::size_t a,
                           std::size_t b) {
  if (a > b || b > noise.grid().total_steps())
    throw Error(ErrorKind::OffGrid, "integration window outside the grid");
  if (b > a && integrand.size() < b)
    throw Error(ErrorKind::InvalidArgument, "integrand shorter than window");
  double s = 0.0;
  for (std::size_t k = a; k < b; ++k) s += integrand[k] * noise.dB(k);
  return s;
}

/// Same as above with the window given in time units.
inline double ito_integral(std::span<const double> integrand, const NoisePath& noise, double a,
                           double b) {
  const auto& g = noise.grid();
  return ito_integral(integrand, noise, g.index_of(a), g.index_of(b));
}

/// CSV dump: t, dB, jump marks (';'-separated).
inline void write_noise_csv(std::ostream& os, const NoisePath& noise) {
  os << "t,dB,jumps\n";
  os.precision(17);
  const auto& g = noise.grid();
  for (std::size_t k = 0; k < g.total_steps(); ++k) {
    os << g.time(k) << ',' << noise.dB(k) << ',';
    bool first = true;
    for (double z : noise.jumps(k)) {
      if (!first) os << ';';
      os << z;
      first = false;
    }
    os << '\n';
  }
}

}  // namespace noisymem
