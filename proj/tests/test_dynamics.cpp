#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "noisymem/dynamics.hpp"
#include "noisymem/models.hpp"

using namespace noisymem;

namespace {

CoefficientModel frozen(double c) {
  CoefficientModel m;
  m.initial = [c](double) { return c; };
  return m;
}

}  // namespace

TEST(Simulate, FrozenDynamicsKeepsInitialValue) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const NoisePath n = sample_noise(g, JumpSpec::none(), 3);
  const StateBundle s = simulate_state(frozen(2.5), ControlPath::constant(g, 0.0), n);
  for (double x : s.x) EXPECT_EQ(x, 2.5);
  const std::size_t m = g.zero_index();
  for (std::size_t j = 0; j <= g.steps(); ++j) {
    const double window = n.brownian(m + j) - n.brownian(j);
    EXPECT_NEAR(s.z[j], 2.5 * window, 1e-13);
  }
}

TEST(Simulate, DelayIsAnIndexShift) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto model = linear_noisy_memory_model({});
  const StateBundle s = simulate_state(model, ControlPath::constant(g, 0.5), sample_noise(g, {}, 4));
  for (std::size_t j = 0; j <= g.steps(); ++j) EXPECT_EQ(s.y[j], s.x[j]);
}

TEST(Simulate, MemoryMatchesWindowedItoIntegral) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto model = linear_noisy_memory_model({});
  const NoisePath n = sample_noise(g, {}, 5);
  const StateBundle s = simulate_state(model, ControlPath::constant(g, 0.5), n);
  const std::size_t m = g.zero_index();
  for (std::size_t j = 0; j <= g.steps(); ++j) {
    const double direct = ito_integral(s.x, n, j, j + m);
    EXPECT_NEAR(s.z[j], direct, 1e-13 * (1.0 + std::abs(direct)));
  }
}

TEST(Simulate, UnitKernelEqualsPlainMemoryBitwise) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto model = linear_noisy_memory_model({});
  const StateBundle s =
      simulate_state(model, ControlPath::constant(g, 0.5), sample_noise(g, {}, 6), MemoryKernel::unit_kernel());
  ASSERT_TRUE(s.z_general.has_value());
  for (std::size_t j = 0; j <= g.steps(); ++j) EXPECT_EQ((*s.z_general)[j], s.z[j]);
}

TEST(Simulate, ConstantOneKernelGivenAsFunctionMatchesPlainMemory) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto model = consumption_model({});
  const NoisePath n = sample_noise(g, {}, 6);
  const auto kern = MemoryKernel::from([](double, double) { return 1.0; }, 1.0);
  const StateBundle a = simulate_state(model, ControlPath::constant(g, 0.5), n, kern);
  for (std::size_t j = 0; j <= g.steps(); ++j)
    EXPECT_NEAR((*a.z_general)[j], a.z[j], 1e-13 * (1.0 + std::abs(a.z[j])));
}

TEST(Simulate, RampKernelRunsAndDiffersFromPlainMemory) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto model = consumption_model({});
  const NoisePath n = sample_noise(g, {}, 7);
  const StateBundle s = simulate_state(model, ControlPath::constant(g, 0.5), n, MemoryKernel::linear_ramp(0.2));
  ASSERT_TRUE(s.z_general.has_value());
  const std::size_t m = g.zero_index();
  const double t = g.time(m + 10);
  double expected = 0.0;
  for (std::size_t i = 10; i < 10 + m; ++i) expected += (g.time(i) - t + 0.2) / 0.2 * s.x[i] * n.dB(i);
  EXPECT_NEAR((*s.z_general)[10], expected, 1e-13);
  EXPECT_NE((*s.z_general)[10], s.z[10]);
}

TEST(Simulate, KernelAboveBoundIsRejected) {
  const TimeGrid g = make_grid(0.2, 1.0, 4);
  const auto model = consumption_model({});
  const auto kern = MemoryKernel::from([](double, double) { return 3.0; }, 1.0);
  EXPECT_THROW(simulate_state(model, ControlPath::constant(g, 0.5), sample_noise(g, {}, 1), kern), Error);
}

TEST(Reduce, AgreesBitwiseWithOneDimensionalSimulation) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto model = linear_noisy_memory_model({});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const NoisePath n = sample_noise(g, {}, seed);
    const StateBundle a = simulate_state(model, ControlPath::constant(g, 0.5), n);
    const StateBundle b = reduce_2d(model, ControlPath::constant(g, 0.5), n);
    EXPECT_EQ(a.x, b.x);
    ASSERT_TRUE(b.x2.has_value());
    const std::size_t m = g.zero_index();
    for (std::size_t j = 0; j <= g.steps(); ++j) EXPECT_EQ(b.z[j], (*b.x2)[j + m] - (*b.x2)[j]);
  }
}

TEST(Reduce, ZeroStateGivesZeroSecondComponent) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const StateBundle s = reduce_2d(frozen(0.0), ControlPath::constant(g, 0.0), sample_noise(g, {}, 2));
  for (double v : *s.x2) EXPECT_EQ(v, 0.0);
}

TEST(Reduce, RejectsGeneralKernel) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  try {
    reduce_2d(consumption_model({}), ControlPath::constant(g, 0.5), sample_noise(g, {}, 2),
              MemoryKernel::linear_ramp(0.2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::KernelNotReducible);
  }
}

TEST(Simulate, GridMismatchAndBlowUpAreReported) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const TimeGrid other = make_grid(0.2, 1.0, 4);
  try {
    simulate_state(consumption_model({}), ControlPath::constant(other, 0.5), sample_noise(g, {}, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
  CoefficientModel explode;
  explode.initial = [](double) { return 1.0; };
  explode.drift = [](const StatePoint& p) { return 1e200 * p.x * p.x; };
  try {
    simulate_state(explode, ControlPath::constant(g, 0.0), sample_noise(g, {}, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteState);
  }
}

TEST(Simulate, LinearMeanMatchesExponentialGrowth) {
  ConsumptionParams c;
  c.a0 = 0.0;
  c.a1 = 0.3;
  c.sigma0 = 0.2;
  const auto model = linear_noisy_memory_model(c);
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const std::size_t n = 100000;
  std::vector<double> xt(n);
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.0), n, 13);
  for (std::size_t i = 0; i < n; ++i) xt[i] = e.states[i].terminal();
  const Estimate est = estimate(xt);
  // Euler mean is exactly (1 + a1 h)^N; the continuous value differs by O(h)
  const double euler = std::pow(1.0 + 0.3 * g.step(), static_cast<double>(g.steps()));
  EXPECT_LE(std::abs(est.mean - euler), 4.0 * est.std_error);
  EXPECT_NEAR(euler, std::exp(0.3), 0.3 * 0.3 * g.step());
}

TEST(Simulate, JumpsAreCompensated) {
  ConsumptionParams c;
  c.a0 = 0.0;
  c.a1 = 0.0;
  c.sigma0 = 0.0;
  c.jump_intensity = 4.0;
  c.jump_mean = 0.5;
  c.jump_sd = 0.2;
  c.jump_scale = 1.0;
  const auto model = consumption_model(c);
  const TimeGrid g = make_grid(0.25, 1.0, 4);
  const std::size_t n = 50000;
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.0), n, 17);
  std::vector<double> xt(n);
  for (std::size_t i = 0; i < n; ++i) xt[i] = e.states[i].terminal() - 1.0;
  const Estimate est = estimate(xt);
  EXPECT_LE(std::abs(est.mean), 4.0 * est.std_error);
}

TEST(Simulate, AdaptedToPastIncrements) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto model = linear_noisy_memory_model({});
  const NoisePath n = sample_noise(g, {}, 31);
  const StateBundle full = simulate_state(model, ControlPath::constant(g, 0.5), n);
  for (std::size_t k0 : {std::size_t{3}, std::size_t{12}, std::size_t{30}}) {
    const StateBundle cut = simulate_state(model, ControlPath::constant(g, 0.5), n.truncated_after(k0));
    for (std::size_t k = 0; k <= k0; ++k) EXPECT_EQ(cut.x[k], full.x[k]);
  }
}

TEST(Simulate, StrongOrderOneHalf) {
  ConsumptionParams c;
  c.a0 = 0.5;
  c.sigma0 = 0.8;
  const auto model = linear_noisy_memory_model(c);
  const std::size_t m = 8;
  const std::size_t n = 2000;
  auto rms_error = [&](std::size_t factor) {
    std::vector<double> err(n);
    for (std::size_t i = 0; i < n; ++i) {
      const TimeGrid fine = make_grid(0.2, 1.0, 8 * m);
      const NoisePath ref_noise = sample_noise(fine, {}, 99, i);
      const double ref = simulate_state(model, ControlPath::constant(fine, 0.5), ref_noise).terminal();
      const NoisePath coarse = ref_noise.coarsen(8 / factor);
      const double x = simulate_state(model, ControlPath::constant(coarse.grid(), 0.5), coarse).terminal();
      err[i] = x - ref;
    }
    return root_mean_square(err);
  };
  const double ratio = rms_error(1) / rms_error(2);
  EXPECT_GE(ratio, 1.2);
  EXPECT_LE(ratio, 1.8);
}

TEST(Performance, DeterministicPayoffs) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  CoefficientModel m = frozen(3.0);
  m.terminal = [](double x) { return x; };
  const Estimate a = performance(m, ControlPath::constant(g, 0.0), 50, 1);
  EXPECT_EQ(a.mean, 3.0);
  EXPECT_EQ(a.std_error, 0.0);

  CoefficientModel one;
  one.running = [](const StatePoint&) { return 1.0; };
  const Estimate b = performance(one, ControlPath::constant(g, 0.0), 10, 1);
  EXPECT_NEAR(b.mean, 1.0, 1e-14);
  EXPECT_EQ(b.std_error, 0.0);
  EXPECT_THROW(performance(one, ControlPath::constant(g, 0.0), 1, 1), Error);
}

TEST(Performance, FirstOrderControlBeatsScaledControls) {
  ConsumptionParams c;
  const auto model = consumption_model(c);
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto star = ControlPath::from_function(g, [&](double t) { return std::exp(-c.a1 * (1.0 - t)); });
  const std::size_t n = 20000;
  const auto base = payoff_samples(model, star, n, 5);
  for (double s : {0.9, 1.1}) {
    const auto other = payoff_samples(model, star.scaled(s), n, 5);
    const Estimate d = paired_difference(base, other);
    EXPECT_GE(d.mean + 3.0 * d.std_error, 0.0);
    EXPECT_GT(d.mean, 0.0);
  }
}

TEST(Gradients, AnalyticGradientsPassSelfCheck) {
  EXPECT_TRUE(check_gradients(linear_noisy_memory_model({})).ok);
  ConsumptionParams c;
  c.jump_intensity = 1.0;
  c.jump_scale = 0.3;
  EXPECT_TRUE(check_gradients(consumption_model(c)).ok);
  AffineParams a;
  a.bx = 0.2;
  a.sz = 0.1;
  a.cx = 0.4;
  a.jump_intensity = 1.0;
  EXPECT_TRUE(check_gradients(affine_model(a)).ok);
}

TEST(Gradients, WrongAnalyticGradientIsCaught) {
  auto m = consumption_model({});
  m.drift_partials = [](const StatePoint&) { return Partials{0.3, 0.0, 0.4, -1.0}; };
  const auto r = check_gradients(m);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.worst_field, "drift");
}

TEST(Gradients, FiniteDifferenceFallback) {
  CoefficientModel m;
  m.drift = [](const StatePoint& p) { return p.x * p.x + 2.0 * p.z * p.u; };
  const StatePoint p{0.0, 1.5, 0.0, -0.5, 2.0};
  const Partials d = m.grad_b(p);
  EXPECT_NEAR(d.x, 3.0, 1e-8);
  EXPECT_NEAR(d.z, 4.0, 1e-8);
  EXPECT_NEAR(d.u, -1.0, 1e-8);
  EXPECT_NEAR(d.y, 0.0, 1e-12);
}

TEST(StateCsv, HasAllColumns) {
  const TimeGrid g = make_grid(0.2, 1.0, 4);
  const StateBundle s = reduce_2d(consumption_model({}), ControlPath::constant(g, 0.5), sample_noise(g, {}, 1));
  std::ostringstream os;
  write_state_csv(os, s);
  EXPECT_EQ(os.str().rfind("t,X,Y,Z,Zp,X2\n", 0), 0u);
}
