#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "noisymem/malliavin.hpp"

using namespace noisymem;

namespace {
const TimeGrid kGrid = make_grid(0.2, 1.0, 8);
}

TEST(Chaos1, ZeroPsiHasZeroDerivative) {
  const auto F = Chaos1Exponential::constant(kGrid, 0.0, 0.3, 2.0);
  const NoisePath n = sample_noise(kGrid, {}, 1);
  for (double t : {0.0, 0.4, 1.0})
    for (double s : {0.0, 0.5, 1.0}) EXPECT_EQ(chaos1_malliavin(F, n, t, s), 0.0);
}

TEST(Chaos1, DerivativeVanishesIntoThePast) {
  const auto F = Chaos1Exponential::constant(kGrid, 0.4, 0.0);
  const NoisePath n = sample_noise(kGrid, {}, 2);
  EXPECT_EQ(chaos1_malliavin(F, n, 0.6, 0.5), 0.0);
  EXPECT_GT(chaos1_malliavin(F, n, 0.5, 0.6), 0.0);
}

TEST(Chaos1, LogDerivativeOfTerminalValueIsPsi) {
  const double c = 0.35;
  const auto F = Chaos1Exponential::martingale(kGrid, std::vector<double>(kGrid.steps() + 1, c));
  const NoisePath n = sample_noise(kGrid, {}, 3);
  const double FT = F.terminal(n);
  for (std::size_t j = 0; j <= kGrid.steps(); ++j) {
    const double t = kGrid.time(kGrid.zero_index() + j);
    EXPECT_NEAR(chaos1_malliavin(F, n, t, 1.0) / FT, c, 1e-15);
  }
}

TEST(Chaos1, OffGridTimesThrow) {
  const auto F = Chaos1Exponential::constant(kGrid, 0.1, 0.0);
  const NoisePath n = sample_noise(kGrid, {}, 1);
  try {
    chaos1_malliavin(F, n, 0.013, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OffGrid);
  }
  EXPECT_THROW(chaos1_malliavin(F, n, -0.1, 0.5), Error);
}

TEST(Chaos1, DerivativeAgreesWithBump) {
  const auto F = Chaos1Exponential::constant(kGrid, 0.3, -0.1, 1.5);
  const NoisePath n = sample_noise(kGrid, {}, 4);
  const double exact = chaos1_malliavin(F, n, 0.25, 1.0);
  const double bumped = bump_malliavin([&](const NoisePath& p) { return F.terminal(p); }, n, 0.25);
  EXPECT_NEAR(bumped, exact, 1e-6);
}

TEST(Chaos1, ConditionalExpectationIsAMartingaleProjection) {
  const auto F = Chaos1Exponential::constant(kGrid, 0.3, 0.2, 1.1);
  const std::size_t n = 50000;
  const std::size_t j = 10;
  // E[F(T)] = E[E[F(T) | F_j]]
  std::vector<double> cond(n), term(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NoisePath p = sample_noise(kGrid, {}, 8, i);
    cond[i] = F.conditional_expectation(p, j, kGrid.steps());
    term[i] = F.terminal(p);
  }
  const Estimate a = estimate(cond), b = estimate(term);
  EXPECT_LE(std::abs(a.mean - F.expectation()), 4.0 * a.std_error);
  EXPECT_LE(std::abs(b.mean - F.expectation()), 4.0 * b.std_error);
  // closed form of the continuous mean: 1.1 exp((0.2 + 0.045) T)
  EXPECT_NEAR(F.expectation(), 1.1 * std::exp(0.245), 1e-12);
}

TEST(Bump, LinearFunctionalIsExact) {
  const NoisePath n = sample_noise(kGrid, {}, 5);
  auto bt = [](const NoisePath& p) {
    const auto b = p.brownian_from_zero();
    return b.back();
  };
  for (double t : {0.0, 0.3, 0.95}) EXPECT_NEAR(bump_malliavin(bt, n, t, 0.5), 1.0, 1e-14);
}

TEST(Bump, IndependentIncrementGivesZero) {
  const NoisePath n = sample_noise(kGrid, {}, 5);
  const std::size_t m = kGrid.zero_index();
  auto early = [m](const NoisePath& p) { return p.dB(m) * p.dB(m + 1); };
  EXPECT_EQ(bump_malliavin(early, n, 0.5), 0.0);
}

TEST(Bump, SquaredIntegralMatchesClosedForm) {
  const NoisePath n = sample_noise(kGrid, {}, 6);
  const std::size_t m = kGrid.zero_index();
  auto psi = [&](std::size_t j) { return 0.5 + 0.1 * static_cast<double>(j) * kGrid.step(); };
  auto integral = [&](const NoisePath& p) {
    double s = 0.0;
    for (std::size_t j = 0; j < kGrid.steps(); ++j) s += psi(j) * p.dB(m + j);
    return s;
  };
  auto sq = [&](const NoisePath& p) {
    const double v = integral(p);
    return v * v;
  };
  const std::size_t j = 12;
  const double exact = 2.0 * psi(j) * integral(n);
  for (double bump : {1e-3, 1e-4}) {
    const double est = bump_malliavin(sq, n, kGrid.time(m + j), bump);
    // forward difference of a quadratic: error is exactly psi^2 * bump
    EXPECT_NEAR(est - exact, psi(j) * psi(j) * bump, 1e-9);
  }
}

TEST(Bump, HorizonHasNoIncrement) {
  const NoisePath n = sample_noise(kGrid, {}, 5);
  EXPECT_THROW(bump_malliavin([](const NoisePath&) { return 0.0; }, n, 1.0), Error);
}

TEST(Duality, BrownianTerminalValue) {
  const std::size_t m = kGrid.zero_index();
  const auto r = duality_check(
      kGrid, [&](const NoisePath& p) { return p.brownian(kGrid.total_steps()) - p.brownian(m); },
      [](const NoisePath&, std::size_t) { return 1.0; }, [](const NoisePath&, std::size_t) { return 1.0; }, 100000,
      21);
  EXPECT_NEAR(r.rhs.mean, 1.0, 1e-12);
  EXPECT_LE(std::abs(r.lhs.mean - 1.0), 4.0 * r.lhs.std_error);
  EXPECT_LE(std::abs(r.z_score), 4.0);
}

TEST(Duality, ConstantFunctionalHasZeroSides) {
  const auto F = Chaos1Exponential::constant(kGrid, 0.0, 0.0, 3.0);
  const auto r = duality_check(F, [](const NoisePath&, std::size_t) { return 1.0; }, 20000, 3);
  EXPECT_EQ(r.rhs.mean, 0.0);
  EXPECT_LE(std::abs(r.lhs.mean), 4.0 * r.lhs.std_error);
}

TEST(Duality, LognormalWithPsiAsTestFunction) {
  // F = exp(c B_T - c^2 T / 2): both sides equal c^2 T in continuous time.
  const double c = 0.1;
  const auto F = Chaos1Exponential::martingale(kGrid, std::vector<double>(kGrid.steps() + 1, c));
  const auto r = duality_check(F, [c](const NoisePath&, std::size_t) { return c; }, 100000, 9);
  EXPECT_LE(std::abs(r.z_score), 4.0);
  EXPECT_LE(std::abs(r.rhs.mean - c * c), 4.0 * r.rhs.std_error);
  EXPECT_LE(std::abs(r.lhs.mean - c * c), 4.0 * r.lhs.std_error);
}

TEST(Duality, AdaptedRandomTestFunction) {
  const std::size_t m = kGrid.zero_index();
  const auto F = Chaos1Exponential::constant(kGrid, 0.5, 0.1, 1.0);
  auto phi = [m](const NoisePath& p, std::size_t j) { return std::cos(p.brownian(m + j) - p.brownian(m)); };
  const auto r = duality_check(F, phi, 100000, 10);
  EXPECT_LE(std::abs(r.z_score), 4.0);
}

TEST(ClarkOcone, ConstantFunctionalIsExact) {
  const auto F = Chaos1Exponential::constant(kGrid, 0.0, 0.2, 2.0);
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_EQ(clark_ocone_residual(F, sample_noise(kGrid, {}, s)), 0.0);
}

TEST(ClarkOcone, ResidualShrinksAlongARefinementChain) {
  const std::size_t finest = 256;
  const TimeGrid fine = make_grid(0.2, 1.0, finest);
  const NoisePath base = sample_noise(fine, {}, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t factor : {64u, 16u, 4u, 1u}) {
    const NoisePath p = factor == 1 ? base : base.coarsen(factor);
    const auto F = Chaos1Exponential::martingale(p.grid(), std::vector<double>(p.grid().steps() + 1, 0.8));
    const double r = clark_ocone_residual(F, p);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(ClarkOcone, IsometryOfTheReconstructedIntegrand) {
  const double c = 0.3;
  const auto F = Chaos1Exponential::martingale(kGrid, std::vector<double>(kGrid.steps() + 1, c));
  const std::size_t n = 100000;
  const std::size_t N = kGrid.steps();
  const double h = kGrid.step();
  std::vector<double> lhs(n), sq(n), val(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NoisePath p = sample_noise(kGrid, {}, 12, i);
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const double d = F.conditional_malliavin(p, j, N);
      s += d * d * h;
    }
    lhs[i] = s;
    val[i] = F.terminal(p);
    sq[i] = val[i] * val[i];
  }
  const Estimate a = estimate(lhs);
  const Estimate b = estimate(sq);
  const Estimate mean = estimate(val);
  const double var = b.mean - mean.mean * mean.mean;
  // continuous value: exp(c^2 T) - 1
  EXPECT_NEAR(var, std::exp(c * c) - 1.0, 4.0 * b.std_error + 2.0 * h * c * c * c * c);
  EXPECT_NEAR(a.mean, var, 4.0 * (a.std_error + b.std_error) + 2.0 * h * c * c * c * c);
}

TEST(ClarkOcone, RmsDecreasesUnderRefinement) {
  const auto coarse = Chaos1Exponential::martingale(kGrid, std::vector<double>(kGrid.steps() + 1, 0.1));
  const TimeGrid fine_grid = make_grid(0.2, 1.0, 16);
  const auto fine = Chaos1Exponential::martingale(fine_grid, std::vector<double>(fine_grid.steps() + 1, 0.1));
  const double r8 = clark_ocone_rms(coarse, 10000, 3, 2);
  const double r16 = clark_ocone_rms(fine, 10000, 3);
  EXPECT_LT(r16, r8);
}
