#pragma once

// Built-in models: the linear noisy-memory consumption model with a
// lognormal terminal price, the deterministic consumption model (also
// used with a memory kernel), and an affine model for custom experiments.

#include <cmath>
#include <string>
#include <vector>

#include "noisymem/dynamics.hpp"
#include "noisymem/malliavin.hpp"
#include "noisymem/paths.hpp"

namespace noisymem {

/// Parameters shared by the consumption models.
///
/// dX = (a0 Z + a1 X - u) dt + sigma dB + int gamma dN~, f(t, u) = ln u,
/// g(x) = x and X = xi0 on [-delta, 0].
struct ConsumptionParams {
  double a0 = 0.5;
  double a1 = 0.3;
  double sigma0 = 0.2;
  double psi = 0.1;
  double xi0 = 1.0;
  double jump_intensity = 0.0;
  double jump_mean = 0.0;
  double jump_sd = 0.0;
  double jump_scale = 0.0;
};

/// sigma = sigma0 X, no jumps and a terminal weight exp(int_0^T psi dB).
inline CoefficientModel linear_noisy_memory_model(const ConsumptionParams& c) {
  CoefficientModel m;
  m.drift = [c](const StatePoint& p) { return c.a0 * p.z + c.a1 * p.x - p.u; };
  m.drift_partials = [c](const StatePoint&) { return Partials{c.a1, 0.0, c.a0, -1.0}; };
  m.diffusion = [c](const StatePoint& p) { return c.sigma0 * p.x; };
  m.diffusion_partials = [c](const StatePoint&) { return Partials{c.sigma0, 0.0, 0.0, 0.0}; };
  m.running = [](const StatePoint& p) { return std::log(p.u); };
  m.running_partials = [](const StatePoint& p) { return Partials{0.0, 0.0, 0.0, 1.0 / p.u}; };
  m.terminal = [](double x) { return x; };
  m.terminal_derivative = [](double) { return 1.0; };
  m.terminal_weight = [c](const NoisePath& noise) {
    const TimeGrid& g = noise.grid();
    return Chaos1Exponential::lognormal(g, std::vector<double>(g.steps() + 1, c.psi)).terminal(noise);
  };
  m.initial = [c](double) { return c.xi0; };
  m.controls = ControlSet::positive();
  return m;
}

/// sigma = sigma0 (additive), gamma = jump_scale * zeta, G = 1. The adjoint
/// of this model is deterministic: p(t) = exp(a1 (T - t)).
inline CoefficientModel consumption_model(const ConsumptionParams& c) {
  CoefficientModel m;
  m.drift = [c](const StatePoint& p) { return c.a0 * p.z + c.a1 * p.x - p.u; };
  m.drift_partials = [c](const StatePoint&) { return Partials{c.a1, 0.0, c.a0, -1.0}; };
  m.diffusion = [c](const StatePoint&) { return c.sigma0; };
  m.diffusion_partials = [](const StatePoint&) { return Partials{}; };
  if (c.jump_intensity > 0.0) {
    m.jump = [c](const StatePoint&, double zeta) { return c.jump_scale * zeta; };
    m.jump_partials = [](const StatePoint&, double) { return Partials{}; };
    m.jumps.intensity = c.jump_intensity;
    m.jumps.marks = MarkDistribution::normal(c.jump_mean, c.jump_sd);
  }
  m.running = [](const StatePoint& p) { return std::log(p.u); };
  m.running_partials = [](const StatePoint& p) { return Partials{0.0, 0.0, 0.0, 1.0 / p.u}; };
  m.terminal = [](double x) { return x; };
  m.terminal_derivative = [](double) { return 1.0; };
  m.initial = [c](double) { return c.xi0; };
  m.controls = ControlSet::positive();
  return m;
}

/// Affine dynamics with a quadratic running reward:
/// b = b0 + bx x + by y + bz z + bu u, sigma = s0 + sx x + sy y + sz z,
/// gamma = (c0 + cx x) zeta, f = -(u - target)^2 / 2 + fx x, g(x) = gx x.
struct AffineParams {
  double b0 = 0.0, bx = 0.0, by = 0.0, bz = 0.0, bu = 1.0;
  double s0 = 0.1, sx = 0.0, sy = 0.0, sz = 0.0;
  double c0 = 0.0, cx = 0.0;
  double target = 0.0, fx = 0.0, gx = 1.0;
  double xi0 = 1.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double jump_intensity = 0.0, jump_mean = 0.0, jump_sd = 0.0;
};

inline CoefficientModel affine_model(const AffineParams& a) {
  CoefficientModel m;
  m.drift = [a](const StatePoint& p) { return a.b0 + a.bx * p.x + a.by * p.y + a.bz * p.z + a.bu * p.u; };
  m.drift_partials = [a](const StatePoint&) { return Partials{a.bx, a.by, a.bz, a.bu}; };
  m.diffusion = [a](const StatePoint& p) { return a.s0 + a.sx * p.x + a.sy * p.y + a.sz * p.z; };
  m.diffusion_partials = [a](const StatePoint&) { return Partials{a.sx, a.sy, a.sz, 0.0}; };
  if (a.jump_intensity > 0.0) {
    m.jump = [a](const StatePoint& p, double zeta) { return (a.c0 + a.cx * p.x) * zeta; };
    m.jump_partials = [a](const StatePoint&, double zeta) { return Partials{a.cx * zeta, 0.0, 0.0, 0.0}; };
    m.jumps.intensity = a.jump_intensity;
    m.jumps.marks = MarkDistribution::normal(a.jump_mean, a.jump_sd);
  }
  m.running = [a](const StatePoint& p) { return -0.5 * (p.u - a.target) * (p.u - a.target) + a.fx * p.x; };
  m.running_partials = [a](const StatePoint& p) { return Partials{a.fx, 0.0, 0.0, -(p.u - a.target)}; };
  m.terminal = [a](double x) { return a.gx * x; };
  m.terminal_derivative = [a](double) { return a.gx; };
  m.initial = [a](double) { return a.xi0; };
  m.controls = ControlSet{a.lower, a.upper, false, false};
  return m;
}

/// Names of the catalog entries understood by the runner.
inline std::vector<std::string> model_catalog() { return {"linear-noisy-memory", "consumption", "affine"}; }

}  // namespace noisymem
