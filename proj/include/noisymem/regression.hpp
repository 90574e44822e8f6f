#pragma once

// Least-squares conditional expectations on a polynomial basis of the state.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "noisymem/error.hpp"

namespace noisymem {

enum class Feature { X, Y, Z, X2 };

inline const char* to_string(Feature f) {
  switch (f) {
    case Feature::X: return "X";
    case Feature::Y: return "Y";
    case Feature::Z: return "Z";
    case Feature::X2: return "X2";
  }
  return "?";
}

/// Total-degree polynomial basis on standardised features.
struct BasisSpec {
  std::vector<Feature> features{Feature::X, Feature::Z};
  int degree = 2;
  double ridge = 1e-8;
  double max_condition = 1e12;

  /// Number of basis functions including the constant.
  std::size_t size() const {
    // C(f + d, d)
    double c = 1.0;
    const std::size_t f = features.size();
    for (int i = 1; i <= degree; ++i) c = c * static_cast<double>(f + static_cast<std::size_t>(i)) / i;
    return static_cast<std::size_t>(std::lround(c));
  }
};

namespace detail {
inline void monomials(const std::vector<double>& v, int degree, std::size_t start, double acc,
                      std::vector<double>& out) {
  out.push_back(acc);
  if (degree == 0) return;
  for (std::size_t i = start; i < v.size(); ++i) monomials(v, degree - 1, i, acc * v[i], out);
}
}  // namespace detail

/// Regression of several responses on the same design.
///
/// Features with (numerically) zero spread, or affine in earlier features,
/// are dropped; a response that is identical on every sample is returned
/// unchanged so deterministic inputs stay exact.
class Regression {
 public:
  Regression(const std::vector<std::vector<double>>& features, const BasisSpec& spec) : spec_(spec) {
    n_ = features.empty() ? 0 : features.front().size();
    std::vector<std::vector<double>> kept, ortho;
    for (const auto& col : features) {
      double mean = 0.0;
      for (double v : col) mean += v;
      mean /= static_cast<double>(std::max<std::size_t>(n_, 1));
      double var = 0.0;
      for (double v : col) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(std::max<std::size_t>(n_, 1)));
      if (sd <= 1e-12 * (1.0 + std::abs(mean))) continue;
      std::vector<double> z(n_);
      for (std::size_t i = 0; i < n_; ++i) z[i] = (col[i] - mean) / sd;
      // drop a feature that is affine in the ones already kept
      std::vector<double> res = z;
      for (const auto& o : ortho) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n_; ++i) dot += res[i] * o[i];
        for (std::size_t i = 0; i < n_; ++i) res[i] -= dot * o[i];
      }
      double norm = 0.0;
      for (double v : res) norm += v * v;
      if (norm <= 1e-10 * static_cast<double>(n_)) continue;
      for (double& v : res) v /= std::sqrt(norm);
      ortho.push_back(std::move(res));
      kept.push_back(std::move(z));
    }
    std::vector<double> row_vals(kept.size());
    std::vector<double> row;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t c = 0; c < kept.size(); ++c) row_vals[c] = kept[c][i];
      row.clear();
      detail::monomials(row_vals, spec.degree, 0, 1.0, row);
      if (i == 0) design_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(row.size()));
      for (std::size_t c = 0; c < row.size(); ++c) design_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
    if (n_ == 0) return;
    const Eigen::Index p = design_.cols();
    if (static_cast<std::size_t>(p) > n_) {
      std::ostringstream os;
      os << "basis of size " << p << " needs more than " << n_ << " samples";
      throw Error(ErrorKind::RankDeficientBasis, os.str());
    }
    Eigen::MatrixXd gram = (design_.transpose() * design_) / static_cast<double>(n_);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(condition_ <= spec.max_condition)) {
      std::ostringstream os;
      os << "regression matrix is ill-conditioned (condition number " << condition_ << ")";
      throw Error(ErrorKind::RankDeficientBasis, os.str());
    }
    for (Eigen::Index c = 1; c < p; ++c) gram(c, c) += spec.ridge;
    solver_.compute(gram);
  }

  double condition_number() const noexcept { return condition_; }
  std::size_t basis_size() const noexcept { return static_cast<std::size_t>(design_.cols()); }

  /// Fitted values E[y | features] at every sample.
  std::vector<double> fit(const std::vector<double>& y) const {
    if (y.size() != n_) throw Error(ErrorKind::InvalidArgument, "response length differs from the design");
    if (n_ == 0) return {};
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); })) return y;
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(n_));
    const Eigen::VectorXd rhs = design_.transpose() * yv / static_cast<double>(n_);
    const Eigen::VectorXd coef = solver_.solve(rhs);
    const Eigen::VectorXd fitted = design_ * coef;
    return std::vector<double>(fitted.data(), fitted.data() + fitted.size());
  }

 private:
  BasisSpec spec_;
  std::size_t n_ = 0;
  Eigen::MatrixXd design_;
  Eigen::LDLT<Eigen::MatrixXd> solver_;
  double condition_ = 1.0;
};

}  // namespace noisymem
