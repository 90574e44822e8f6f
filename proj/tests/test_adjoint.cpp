#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "noisymem/adjoint.hpp"
#include "noisymem/models.hpp"

using namespace noisymem;

namespace {

ConsumptionParams linear_params() {
  ConsumptionParams c;
  c.a0 = 0.5;
  c.a1 = 0.3;
  c.sigma0 = 0.2;
  c.psi = 0.1;
  return c;
}

LinearBSDESpec linear_spec(const TimeGrid& g, const ConsumptionParams& c) {
  return LinearBSDESpec::constant(g, c.a0, c.a1, c.sigma0, c.psi);
}

MalliavinSource linear_source(const LinearClosedForm& cf) {
  return MalliavinSource::chaos1(std::vector<double>(cf.spec.grid.steps() + 1, cf.spec.a0), cf.family());
}

AdjointTriple deterministic_adjoint(const TimeGrid& g, double a1) {
  const std::size_t n = g.steps();
  AdjointTriple a{g, std::vector<double>(n + 1), std::vector<double>(n + 1, 0.0), std::vector<MarkFunction>(n + 1),
                  std::vector<double>(n + 1, 0.0)};
  for (std::size_t j = 0; j <= n; ++j) a.p[j] = std::exp(a1 * (g.horizon() - g.time(g.zero_index() + j)));
  return a;
}

std::vector<double> deterministic_dHdz(const TimeGrid& g, double a0, double a1) {
  auto p = deterministic_adjoint(g, a1).p;
  for (double& v : p) v *= a0;
  return p;
}

ConsumptionParams consumption_params() {
  ConsumptionParams c;
  c.a0 = 1.0;
  c.a1 = 0.3;
  c.sigma0 = 0.2;
  c.jump_intensity = 2.0;
  c.jump_mean = 0.1;
  c.jump_sd = 0.2;
  c.jump_scale = 0.3;
  return c;
}

}  // namespace

TEST(Hamiltonian, PayoffOnlyWithZeroAdjoint) {
  const auto model = consumption_model(consumption_params());
  const StatePoint pt{0.3, 1.2, 0.8, -0.4, 0.7};
  const auto h = hamiltonian(pt, 0.0, 0.0, {}, model);
  EXPECT_EQ(h.value, std::log(0.7));
}

TEST(Hamiltonian, ConsumptionModelFormAndPartials) {
  const auto c = consumption_params();
  const auto model = consumption_model(c);
  const StatePoint pt{0.3, 1.2, 0.8, -0.4, 0.7};
  const double p = 1.3, q = 0.4;
  const MarkFunction r{0.2, -0.5};
  const auto h = hamiltonian(pt, p, q, r, model);
  // int gamma r dnu = lambda E[s zeta (c0 + c1 zeta)]
  const double jump = c.jump_intensity * c.jump_scale * (r.c0 * c.jump_mean + r.c1 * (c.jump_mean * c.jump_mean + c.jump_sd * c.jump_sd));
  EXPECT_NEAR(h.value, std::log(0.7) + (-0.4 + 0.3 * 1.2 - 0.7) * p + 0.2 * q + jump, 1e-14);
  EXPECT_NEAR(h.grad.u, 1.0 / 0.7 - p, 1e-14);
  EXPECT_NEAR(h.grad.x, 0.3 * p, 1e-14);
  EXPECT_NEAR(h.grad.z, 1.0 * p, 1e-14);
  EXPECT_EQ(h.grad.y, 0.0);
}

TEST(Hamiltonian, LinearModelMemoryPartialIsA0P) {
  const auto c = linear_params();
  const auto model = linear_noisy_memory_model(c);
  const auto h = hamiltonian({0.1, 2.0, 1.0, 0.3, 0.5}, 1.7, 0.2, {}, model);
  EXPECT_DOUBLE_EQ(h.grad.z, c.a0 * 1.7);
  EXPECT_DOUBLE_EQ(h.grad.x, c.a1 * 1.7 + c.sigma0 * 0.2);
}

TEST(Hamiltonian2D, VanishingCouplingGivesTheOneDimensionalValue) {
  const auto model = consumption_model(consumption_params());
  const State2D s{0.4, 1.1, 0.6, 0.9, 0.2};
  Adjoint2DNode a;
  a.p1 = 1.2;
  a.q1 = 0.3;
  a.r1 = {0.1, 0.2};
  const auto h2 = hamiltonian_2d_relation(s, 0.8, a, model);
  EXPECT_EQ(h2.value, hamiltonian({0.4, 1.1, 0.9, 0.4, 0.8}, 1.2, 0.3, a.r1, model).value);
}

TEST(Hamiltonian2D, AlgebraicIdentityOnRandomInputs) {
  const auto model = linear_noisy_memory_model(linear_params());
  for (std::uint64_t i = 0; i < 200; ++i) {
    const rng::CounterKey key{5, 0, i};
    const State2D s{rng::uniform_open(key, 0), rng::standard_normal(key, 1), rng::standard_normal(key, 2),
                    rng::standard_normal(key, 3), rng::standard_normal(key, 4)};
    Adjoint2DNode a;
    a.p1 = rng::standard_normal(key, 5);
    a.p2 = rng::standard_normal(key, 6);
    a.q1 = rng::standard_normal(key, 7);
    a.q2 = rng::standard_normal(key, 8);
    const auto h2 = hamiltonian_2d_relation(s, 0.1 + rng::uniform_open(key, 20), a, model);
    EXPECT_LE(h2.residual, 1e-12 * (1.0 + std::abs(h2.value)));
  }
}

TEST(Hamiltonian2D, ConsumptionValuesAtTheDeterministicAdjoint) {
  ConsumptionParams c = consumption_params();
  c.jump_intensity = 0.0;
  const auto model = consumption_model(c);
  const double t = 0.4, x = 1.1, z = 0.3, u = 0.8;
  Adjoint2DNode a;
  a.p1 = std::exp(c.a1 * (1.0 - t));
  const State2D s{t, x, z + 0.5, 0.9, 0.5};
  const auto h2 = hamiltonian_2d_relation(s, u, a, model);
  EXPECT_NEAR(h2.value, std::log(u) + (z + c.a1 * x - u) * a.p1, 1e-14);
}

TEST(ClosedForm, MemorylessDeterministicLimit) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto cf = solve_linear_closed_form(LinearBSDESpec::constant(g, 0.0, 0.3, 0.2, 0.0));
  for (std::size_t j = 0; j <= g.steps(); ++j) {
    EXPECT_EQ(cf.A[j], 0.3);
    EXPECT_NEAR(cf.alpha[j], -0.3, 1e-15);
  }
  EXPECT_NEAR(cf.C, std::exp(0.3), 1e-12);
  const auto adj = cf.adjoint(sample_noise(g, {}, 4));
  for (std::size_t j = 0; j <= g.steps(); ++j) {
    EXPECT_NEAR(adj.p[j], std::exp(0.3 * (1.0 - g.time(g.zero_index() + j))), 1e-12);
    EXPECT_EQ(adj.q[j], 0.0);
  }
}

TEST(ClosedForm, ZeroPsiSwitchesTheKernelOff) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto cf = solve_linear_closed_form(LinearBSDESpec::constant(g, 0.5, 0.3, 0.2, 0.0));
  const auto adj = cf.adjoint(sample_noise(g, {}, 4));
  for (std::size_t j = 0; j <= g.steps(); ++j) {
    EXPECT_EQ(cf.A[j], 0.3);
    EXPECT_NEAR(adj.p[j], std::exp(0.3 * (1.0 - g.time(g.zero_index() + j))), 1e-12);
  }
}

TEST(ClosedForm, MemoryAddsTheWindowIntegral) {
  const TimeGrid g = make_grid(0.2, 1.0, 40);
  const auto c = linear_params();
  const auto cf = solve_linear_closed_form(linear_spec(g, c));
  // near t = 0 the window is a full delta: A ~ a1 + a0 psi int_0^delta exp(alpha s) ds
  const double a = cf.alpha[0];
  const double expected = c.a1 + c.a0 * c.psi * (std::exp(a * 0.2) - 1.0) / a;
  EXPECT_NEAR(cf.A[0], expected, 2e-4);
  EXPECT_NEAR(cf.alpha[0], -cf.A[0] - c.sigma0 * c.psi, 1e-14);
  // at T the window is empty
  EXPECT_EQ(cf.A[g.steps()], c.a1);
}

TEST(ClosedForm, TerminalValueIsTheWeightedPayoffDerivative) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto c = linear_params();
  const auto model = linear_noisy_memory_model(c);
  const auto cf = solve_linear_closed_form(linear_spec(g, c));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const NoisePath n = sample_noise(g, {}, s);
    const auto adj = cf.adjoint(n);
    EXPECT_EQ(adj.p.back(), model.weight(n) * model.g_prime(0.0));
  }
}

TEST(ClosedForm, DivergingIterationIsReported) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  try {
    solve_linear_closed_form(LinearBSDESpec::constant(g, 1e6, 0.3, 0.2, -50.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FixedPointDiverged);
    EXPECT_NE(std::string(e.what()).find("trace"), std::string::npos);
  }
}

TEST(ClosedForm, ExpectationMatchesDiscreteMartingaleFactor) {
  // E[p(T)] = E[G(T)] = exp(psi^2 T / 2)
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto cf = solve_linear_closed_form(linear_spec(g, linear_params()));
  EXPECT_NEAR(cf.family().expectation(), std::exp(0.5 * 0.01), 1e-13);
}

TEST(Residual, ClosedFormIsFirstOrder) {
  const auto c = linear_params();
  const auto r = closed_form_residual_order(
      linear_noisy_memory_model(c), [&](const TimeGrid& g) { return linear_spec(g, c); }, make_grid(0.2, 1.0, 8), 1000,
      1);
  EXPECT_GE(r.order, 0.7);
  EXPECT_LE(r.order, 1.3);
  EXPECT_LT(r.fine.rms, r.coarse.rms);
}

TEST(Residual, ClosedFormDriverMatchesTheHamiltonianDriver) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto c = linear_params();
  const auto model = linear_noisy_memory_model(c);
  const auto cf = solve_linear_closed_form(linear_spec(g, c));
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 20, 3);
  std::vector<AdjointTriple> adj;
  for (const auto& n : e.noises) adj.push_back(cf.adjoint(n));
  const auto mu = mu_generalized(e, adj, model, linear_source(cf));
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = 0; j < g.steps(); ++j) EXPECT_NEAR(mu[i][j], adj[i].mu[j], 1e-12 * std::abs(adj[i].mu[j]));
}

TEST(Residual, DeterministicAdjointIsSecondOrderPerStep) {
  const auto c = consumption_params();
  const auto model = consumption_model(c);
  for (std::size_t m : {8u, 16u}) {
    const TimeGrid g = make_grid(0.2, 1.0, m);
    const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 5, 1);
    std::vector<AdjointTriple> adj(e.size(), deterministic_adjoint(g, c.a1));
    const auto r = bsde_residual_1d(e, adj, model, MalliavinSource::deterministic(deterministic_dHdz(g, c.a0, c.a1)));
    const double h = g.step();
    EXPECT_LE(r.sup, c.a1 * c.a1 * std::exp(c.a1) * h * h);
    EXPECT_LE(r.cumulative_sup, c.a1 * c.a1 * std::exp(c.a1) * h);
  }
}

TEST(Residual, NullSystemHasZeroResidual) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  CoefficientModel zero;
  const Ensemble e = simulate_ensemble(zero, ControlPath::constant(g, 0.0), 5, 1);
  const std::size_t n = g.steps();
  std::vector<AdjointTriple> adj(
      e.size(), AdjointTriple{g, std::vector<double>(n + 1, 0.0), std::vector<double>(n + 1, 0.0),
                              std::vector<MarkFunction>(n + 1), std::vector<double>(n + 1, 0.0)});
  const auto r = bsde_residual_1d(e, adj, zero, MalliavinSource::unavailable());
  EXPECT_EQ(r.sup, 0.0);
}

TEST(Residual, MissingMalliavinSourceIsAnError) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto c = linear_params();
  const auto model = linear_noisy_memory_model(c);
  const auto cf = solve_linear_closed_form(linear_spec(g, c));
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 3, 3);
  std::vector<AdjointTriple> adj;
  for (const auto& n : e.noises) adj.push_back(cf.adjoint(n));
  try {
    bsde_residual_1d(e, adj, model, MalliavinSource::unavailable());
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::MalliavinUnavailable);
  }
}

TEST(Residual, BrownianTermIsAMartingale) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto cf = solve_linear_closed_form(linear_spec(g, linear_params()));
  const std::size_t n = 20000;
  for (std::size_t j : {0u, 10u, 39u}) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const NoisePath p = sample_noise(g, {}, 2, i);
      v[i] = cf.adjoint(p).q[j] * p.dB(g.zero_index() + j);
    }
    const Estimate e = estimate(v);
    EXPECT_LE(std::abs(e.mean), 4.0 * e.std_error);
  }
}

TEST(Bridge, LinearWindowMatchesClosedForm) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto c = linear_params();
  const auto model = linear_noisy_memory_model(c);
  const auto cf = solve_linear_closed_form(linear_spec(g, c));
  const auto src = linear_source(cf);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const NoisePath n = sample_noise(g, {}, s);
    const auto adj = cf.adjoint(n);
    const auto lift = lift_2d_from_1d(adj, src, 0, n);
    const auto q2 = cf.q2_path(n);
    const StateBundle st = simulate_state(model, ControlPath::constant(g, 0.5), n);
    for (std::size_t j = 0; j < g.steps(); ++j) {
      EXPECT_NEAR(lift.adjoint.q2[j], q2[j], 1e-10);
      const auto h = hamiltonian(st.point(j, 0.5), adj.p[j], adj.q[j], adj.r[j], model);
      const double mu1 = lift.adjoint.q2[j] + h.grad.x;
      EXPECT_NEAR(mu1, adj.mu[j], 1e-10);
    }
  }
}

TEST(Bridge, DeterministicIntegrandHasNoQ2) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto c = consumption_params();
  const auto src = MalliavinSource::deterministic(deterministic_dHdz(g, c.a0, c.a1));
  const NoisePath n = sample_noise(g, {}, 1);
  const auto lift = lift_2d_from_1d(deterministic_adjoint(g, c.a1), src, 0, n);
  for (double v : lift.adjoint.q2) EXPECT_EQ(v, 0.0);
  const auto back = bridge_1d_from_2d(lift.adjoint, src, 0, n);
  EXPECT_EQ(back.q2_max_deviation, 0.0);
}

TEST(Bridge, LiftThenBridgeIsTheIdentity) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto cf = solve_linear_closed_form(linear_spec(g, linear_params()));
  const NoisePath n = sample_noise(g, {}, 12);
  const auto adj = cf.adjoint(n);
  const auto back = bridge_1d_from_2d(lift_2d_from_1d(adj, linear_source(cf), 0, n).adjoint, linear_source(cf), 0, n);
  EXPECT_EQ(back.adjoint.p, adj.p);
  EXPECT_EQ(back.adjoint.q, adj.q);
  EXPECT_EQ(back.adjoint.r, adj.r);
  EXPECT_EQ(back.q2_max_deviation, 0.0);
}

TEST(Bridge, LiftedP2MatchesTheConsumptionFormula) {
  const auto c = consumption_params();
  for (std::size_t m : {8u, 32u}) {
    const TimeGrid g = make_grid(0.2, 1.0, m);
    const auto src = MalliavinSource::deterministic(deterministic_dHdz(g, c.a0, c.a1));
    const NoisePath n = sample_noise(g, {}, 1);
    const auto lift = lift_2d_from_1d(deterministic_adjoint(g, c.a1), src, 0, n);
    const double h = g.step();
    for (std::size_t j = 0; j <= g.steps(); ++j) {
      const double t = g.time(g.zero_index() + j);
      // a0 int_t^T (p1(s) - p1(s + delta) 1{s <= T - delta}) ds in closed form
      auto P = [&](double s) { return -std::exp(c.a1 * (1.0 - s)) / c.a1; };
      double v = P(1.0) - P(t);
      if (t < 0.8) v -= P(1.0) - P(t + 0.2);
      v *= c.a0;
      EXPECT_NEAR(lift.adjoint.p2[j], v, 2.0 * c.a0 * std::exp(c.a1) * h);
    }
    EXPECT_LE(lift.p2_residual, 2.0 * c.a0 * std::exp(c.a1) * h);
  }
}

TEST(Bridge, BumpTabulationApproximatesTheChaosSource) {
  const TimeGrid g = make_grid(0.2, 1.0, 4);
  const auto c = linear_params();
  const auto model = linear_noisy_memory_model(c);
  const auto cf = solve_linear_closed_form(linear_spec(g, c));
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 3000, 8);
  const auto tab = tabulate_by_bump(e, [&](std::size_t, const NoisePath& n) {
    auto p = cf.p_path(n);
    for (double& v : p) v *= c.a0;
    return p;
  });
  const auto exact = linear_source(cf);
  double worst = 0.0;
  for (std::size_t i = 0; i < e.size(); i += 50)
    for (std::size_t j = 0; j < g.steps(); ++j) {
      const double a = window_malliavin(tab, i, e.noises[i], j);
      const double b = window_malliavin(exact, i, e.noises[i], j);
      worst = std::max(worst, std::abs(a - b) / std::abs(b));
    }
  EXPECT_LT(worst, 0.1);
}

TEST(Kernel, UnitKernelReproducesMuBitwise) {
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const auto c = linear_params();
  const auto model = linear_noisy_memory_model(c);
  const auto cf = solve_linear_closed_form(linear_spec(g, c));
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 10, 3);
  std::vector<AdjointTriple> adj;
  for (const auto& n : e.noises) adj.push_back(cf.adjoint(n));
  const auto a = mu_generalized(e, adj, model, linear_source(cf));
  const auto b = mu_generalized(e, adj, model, linear_source(cf), {}, MemoryKernel::unit_kernel());
  const auto zero = mu_generalized(e, adj, model, linear_source(cf), {},
                                   MemoryKernel::from([](double, double) { return 0.0; }, 0.0));
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = 0; j < g.steps(); ++j) {
      const auto h = hamiltonian(e.states[i].point(j, 0.5), adj[i].p[j], adj[i].q[j], {}, model);
      EXPECT_EQ(zero[i][j], h.grad.x + 0.0);
    }
}

TEST(Kernel, RampKernelDeterministicAdjointSolvesTheOde) {
  const auto c = consumption_params();
  const auto model = consumption_model(c);
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 4, 1, MemoryKernel::linear_ramp(0.2));
  std::vector<AdjointTriple> adj(e.size(), deterministic_adjoint(g, c.a1));
  const auto mu = mu_generalized(e, adj, model, MalliavinSource::deterministic(deterministic_dHdz(g, c.a0, c.a1)));
  for (std::size_t j = 0; j < g.steps(); ++j) EXPECT_NEAR(mu[0][j], c.a1 * adj[0].p[j], 1e-15);
}

TEST(Absde, ConsumptionModelRecoversTheDeterministicAdjoint) {
  const auto c = consumption_params();
  const auto model = consumption_model(c);
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 2000, 4, std::nullopt, true);
  const auto sol = solve_absde_2d(model, e);
  double err = 0.0, norm = 0.0;
  for (const auto& a : sol.paths) {
    EXPECT_EQ(a.p2.back(), 0.0);
    EXPECT_EQ(a.p1.back(), 1.0);
    for (std::size_t j = 0; j <= g.steps(); ++j) {
      const double exact = std::exp(c.a1 * (1.0 - g.time(g.zero_index() + j)));
      err += (a.p1[j] - exact) * (a.p1[j] - exact);
      norm += exact * exact;
      EXPECT_EQ(a.q1[j], 0.0);
      EXPECT_EQ(a.q2[j], 0.0);
      EXPECT_EQ(a.r1[j], MarkFunction{});
      EXPECT_EQ(a.r2[j], MarkFunction{});
    }
  }
  EXPECT_LT(std::sqrt(err / norm), 0.01);
}

TEST(Absde, NullSystemGivesZeroAdjoint) {
  CoefficientModel zero;
  zero.initial = [](double) { return 1.0; };
  zero.diffusion = [](const StatePoint& p) { return 0.3 * p.x; };
  const TimeGrid g = make_grid(0.2, 1.0, 4);
  const Ensemble e = simulate_ensemble(zero, ControlPath::constant(g, 0.0), 200, 4, std::nullopt, true);
  const auto sol = solve_absde_2d(zero, e);
  for (const auto& a : sol.paths)
    for (std::size_t j = 0; j <= g.steps(); ++j) {
      EXPECT_EQ(a.p1[j], 0.0);
      EXPECT_EQ(a.p2[j], 0.0);
      EXPECT_EQ(a.q1[j], 0.0);
      EXPECT_EQ(a.q2[j], 0.0);
    }
}

TEST(Absde, LinearModelTracksTheClosedForm) {
  const auto c = linear_params();
  const auto model = linear_noisy_memory_model(c);
  const TimeGrid g = make_grid(0.2, 1.0, 8);
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 4000, 6, std::nullopt, true);
  const auto sol = solve_absde_2d(model, e);
  const auto cf = solve_linear_closed_form(linear_spec(g, c));
  double err = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto p = cf.p_path(e.noises[i]);
    for (std::size_t j = 0; j <= g.steps(); ++j) {
      err += (sol.paths[i].p1[j] - p[j]) * (sol.paths[i].p1[j] - p[j]);
      norm += p[j] * p[j];
    }
  }
  EXPECT_LT(std::sqrt(err / norm), 0.05);
}

TEST(Absde, IllConditionedBasisIsRejected) {
  const auto model = consumption_model(consumption_params());
  const TimeGrid g = make_grid(0.2, 1.0, 4);
  const Ensemble e = simulate_ensemble(model, ControlPath::constant(g, 0.5), 500, 4, std::nullopt, true);
  BasisSpec basis;
  basis.max_condition = 1.5;
  try {
    solve_absde_2d(model, e, basis);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::RankDeficientBasis);
  }
}

TEST(Regression, CollinearFeaturesAreDropped) {
  std::vector<double> x(200), y(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng::standard_normal({3, 0, i}, 0);
    y[i] = 1.0 + 2.0 * x[i] + x[i] * x[i];
  }
  std::vector<double> twice(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) twice[i] = 3.0 - 2.0 * x[i];
  const Regression reg({x, twice}, BasisSpec{});
  EXPECT_EQ(reg.basis_size(), 3u);
  const auto fit = reg.fit(y);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(fit[i], y[i], 1e-6);
}

TEST(AdjointCsv, WritesOneRowPerNode) {
  const TimeGrid g = make_grid(0.2, 1.0, 4);
  std::vector<AdjointTriple> adj{deterministic_adjoint(g, 0.3)};
  std::ostringstream os;
  write_adjoint_csv(os, adj);
  const std::string s = os.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), g.steps() + 2);
}
