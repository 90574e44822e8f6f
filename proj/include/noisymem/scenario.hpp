#pragma once

// Declarative scenarios: a sectioned config selects a catalog model, a grid,
// a control and a list of checks; run_scenario executes them and assembles
// a schema-versioned JSON report plus CSV dumps.

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "noisymem/adjoint.hpp"
#include "noisymem/config.hpp"
#include "noisymem/maxprinciple.hpp"
#include "noisymem/models.hpp"

namespace noisymem {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

/// Check ids understood by the runner, in pipeline order.
inline const std::vector<std::string>& check_catalog() {
  static const std::vector<std::string> ids{"closed_form", "residual_order", "bridge",       "absde",
                                            "directional", "foc",            "necessary_I",  "necessary_II",
                                            "sufficient",  "spikes"};
  return ids;
}

struct CheckTolerances {
  double deterministic = 1e-10;
  double necessary = 1e-12;
  double se_multiple = 3.0;
  double agreement_se = 4.0;
  double agreement_rel = 1e-3;
  double fd_step = 1e-3;
  double order_min = 0.7;
  double order_max = 1.3;
  double absde_rms = 0.05;
  double fit_rms = 0.01;
  double zero_rms = 0.02;
  std::uint64_t residual_paths = 1000;
  std::uint64_t bridge_paths = 20;
  std::uint64_t probe_count = 200;
  std::uint64_t spike_count = 20;
  double spike_width = 0.1;
  double spike_se = 2.0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string model = "linear-noisy-memory";
  std::string kernel = "unit";
  ConsumptionParams params;
  AffineParams affine;
  double delta = 0.2;
  double horizon = 1.0;
  std::uint64_t m = 8;
  std::uint64_t n_paths = 2000;
  std::uint64_t seed = 1;
  BasisSpec basis;
  std::string control = "constant";
  double control_value = 0.5;
  std::string information = "trivial";
  std::vector<std::string> checks;
  CheckTolerances tol;
  std::string output_dir = "out";
  bool paths_csv = true;
  bool adjoint_csv = true;
};

namespace detail {

inline Feature parse_feature(const std::string& s, ConfigDocument& doc, std::size_t line) {
  if (s == "X") return Feature::X;
  if (s == "Y") return Feature::Y;
  if (s == "Z") return Feature::Z;
  if (s == "X2") return Feature::X2;
  doc.fail(line, "unknown basis feature '" + s + "' (expected X, Y, Z or X2)");
}

inline void require_one_of(ConfigDocument& doc, const std::string& section, const std::string& key,
                           const std::string& value, const std::vector<std::string>& allowed) {
  if (std::find(allowed.begin(), allowed.end(), value) != allowed.end()) return;
  std::string list;
  for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
  doc.fail(doc.line_of(section, key), "'" + key + "' must be one of " + list + ", got '" + value + "'");
}

/// Numbers in the report: non-finite values become strings so nothing is lost.
inline Json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline Json nums(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

}  // namespace detail

/// Reads every known key (defaults where absent) and rejects the rest.
inline ScenarioConfig load_scenario(ConfigDocument doc) {
  ScenarioConfig c;
  c.name = doc.text("scenario", "name", c.name);

  c.model = doc.text("model", "name", c.model);
  detail::require_one_of(doc, "model", "name", c.model, model_catalog());
  c.kernel = doc.text("model", "kernel", c.kernel);
  detail::require_one_of(doc, "model", "kernel", c.kernel, {"unit", "ramp"});

  auto& p = c.params;
  p.a0 = doc.number("parameters", "a0", p.a0);
  p.a1 = doc.number("parameters", "a1", p.a1);
  p.sigma0 = doc.number("parameters", "sigma0", p.sigma0);
  p.psi = doc.number("parameters", "psi", p.psi);
  p.xi0 = doc.number("parameters", "xi0", p.xi0);
  p.jump_intensity = doc.number("parameters", "jump_intensity", p.jump_intensity);
  p.jump_mean = doc.number("parameters", "jump_mean", p.jump_mean);
  p.jump_sd = doc.number("parameters", "jump_sd", p.jump_sd);
  p.jump_scale = doc.number("parameters", "jump_scale", p.jump_scale);
  c.delta = doc.number("parameters", "delta", c.delta);
  c.horizon = doc.number("parameters", "T", c.horizon);

  auto& a = c.affine;
  for (auto [key, field] : std::initializer_list<std::pair<const char*, double*>>{
           {"b0", &a.b0}, {"bx", &a.bx}, {"by", &a.by}, {"bz", &a.bz}, {"bu", &a.bu}, {"s0", &a.s0},
           {"sx", &a.sx}, {"sy", &a.sy}, {"sz", &a.sz}, {"c0", &a.c0}, {"cx", &a.cx}, {"target", &a.target},
           {"fx", &a.fx}, {"gx", &a.gx}, {"xi0", &a.xi0}, {"lower", &a.lower}, {"upper", &a.upper},
           {"jump_intensity", &a.jump_intensity}, {"jump_mean", &a.jump_mean}, {"jump_sd", &a.jump_sd}})
    *field = doc.number("affine", key, *field);

  c.m = doc.count("grid", "m", c.m);
  c.n_paths = doc.count("monte_carlo", "n_paths", c.n_paths);
  c.seed = doc.count("monte_carlo", "seed", c.seed);

  if (doc.has("solver", "basis")) {
    const std::size_t line = doc.line_of("solver", "basis");
    c.basis.features.clear();
    for (const auto& f : doc.list("solver", "basis", {})) c.basis.features.push_back(detail::parse_feature(f, doc, line));
  }
  c.basis.degree = static_cast<int>(doc.count("solver", "degree", static_cast<std::uint64_t>(c.basis.degree)));
  c.basis.ridge = doc.number("solver", "ridge", c.basis.ridge);
  c.basis.max_condition = doc.number("solver", "max_condition", c.basis.max_condition);

  c.control = doc.text("control", "kind", c.control);
  detail::require_one_of(doc, "control", "kind", c.control, {"constant", "foc"});
  c.control_value = doc.number("control", "value", c.control_value);
  c.information = doc.text("control", "information", c.information);
  detail::require_one_of(doc, "control", "information", c.information, {"trivial", "full"});

  c.checks = doc.list("checks", "run", c.checks);
  for (const auto& id : c.checks)
    if (std::find(check_catalog().begin(), check_catalog().end(), id) == check_catalog().end())
      doc.fail(doc.line_of("checks", "run"), "unknown check '" + id + "'");
  auto& t = c.tol;
  for (auto [key, field] : std::initializer_list<std::pair<const char*, double*>>{
           {"deterministic_tol", &t.deterministic}, {"necessary_tol", &t.necessary}, {"se_multiple", &t.se_multiple},
           {"agreement_se", &t.agreement_se}, {"agreement_rel", &t.agreement_rel}, {"fd_step", &t.fd_step},
           {"order_min", &t.order_min}, {"order_max", &t.order_max}, {"absde_rms", &t.absde_rms},
           {"fit_rms", &t.fit_rms}, {"zero_rms", &t.zero_rms}, {"spike_width", &t.spike_width},
           {"spike_se", &t.spike_se}})
    *field = doc.number("checks", key, *field);
  for (auto [key, field] : std::initializer_list<std::pair<const char*, std::uint64_t*>>{
           {"residual_paths", &t.residual_paths}, {"bridge_paths", &t.bridge_paths},
           {"probe_count", &t.probe_count}, {"spike_count", &t.spike_count}})
    *field = doc.count("checks", key, *field);

  c.output_dir = doc.text("output", "directory", c.output_dir);
  c.paths_csv = doc.flag("output", "paths_csv", c.paths_csv);
  c.adjoint_csv = doc.flag("output", "adjoint_csv", c.adjoint_csv);

  doc.reject_unused({"scenario", "model", "parameters", "affine", "grid", "monte_carlo", "solver", "control",
                     "checks", "output"});
  return c;
}

inline ScenarioConfig load_scenario_file(const std::string& path) { return load_scenario(ConfigDocument::parse_file(path)); }

/// Every resolved value, defaults included.
inline Json config_echo(const ScenarioConfig& c) {
  using detail::num;
  Json j;
  j["scenario"] = {{"name", c.name}};
  j["model"] = {{"name", c.model}, {"kernel", c.kernel}};
  const auto& p = c.params;
  j["parameters"] = {{"a0", num(p.a0)},
                     {"a1", num(p.a1)},
                     {"sigma0", num(p.sigma0)},
                     {"psi", num(p.psi)},
                     {"xi0", num(p.xi0)},
                     {"delta", num(c.delta)},
                     {"T", num(c.horizon)},
                     {"jump_intensity", num(p.jump_intensity)},
                     {"jump_mean", num(p.jump_mean)},
                     {"jump_sd", num(p.jump_sd)},
                     {"jump_scale", num(p.jump_scale)}};
  if (c.model == "affine") {
    const auto& a = c.affine;
    j["affine"] = {{"b0", num(a.b0)},       {"bx", num(a.bx)},         {"by", num(a.by)},
                   {"bz", num(a.bz)},       {"bu", num(a.bu)},         {"s0", num(a.s0)},
                   {"sx", num(a.sx)},       {"sy", num(a.sy)},         {"sz", num(a.sz)},
                   {"c0", num(a.c0)},       {"cx", num(a.cx)},         {"target", num(a.target)},
                   {"fx", num(a.fx)},       {"gx", num(a.gx)},         {"xi0", num(a.xi0)},
                   {"lower", num(a.lower)}, {"upper", num(a.upper)},   {"jump_intensity", num(a.jump_intensity)},
                   {"jump_mean", num(a.jump_mean)}, {"jump_sd", num(a.jump_sd)}};
  }
  j["grid"] = {{"m", c.m}};
  j["monte_carlo"] = {{"n_paths", c.n_paths}, {"seed", c.seed}};
  Json features = Json::array();
  for (Feature f : c.basis.features) features.push_back(to_string(f));
  j["solver"] = {{"basis", features},
                 {"degree", c.basis.degree},
                 {"ridge", num(c.basis.ridge)},
                 {"max_condition", num(c.basis.max_condition)}};
  j["control"] = {{"kind", c.control}, {"value", num(c.control_value)}, {"information", c.information}};
  const auto& t = c.tol;
  j["checks"] = {{"run", c.checks},
                 {"deterministic_tol", num(t.deterministic)},
                 {"necessary_tol", num(t.necessary)},
                 {"se_multiple", num(t.se_multiple)},
                 {"agreement_se", num(t.agreement_se)},
                 {"agreement_rel", num(t.agreement_rel)},
                 {"fd_step", num(t.fd_step)},
                 {"order_min", num(t.order_min)},
                 {"order_max", num(t.order_max)},
                 {"absde_rms", num(t.absde_rms)},
                 {"fit_rms", num(t.fit_rms)},
                 {"zero_rms", num(t.zero_rms)},
                 {"residual_paths", t.residual_paths},
                 {"bridge_paths", t.bridge_paths},
                 {"probe_count", t.probe_count},
                 {"spike_count", t.spike_count},
                 {"spike_width", num(t.spike_width)},
                 {"spike_se", num(t.spike_se)}};
  j["output"] = {{"directory", c.output_dir}, {"paths_csv", c.paths_csv}, {"adjoint_csv", c.adjoint_csv}};
  return j;
}

inline Json to_json(const Estimate& e) {
  return {{"mean", detail::num(e.mean)}, {"std_error", detail::num(e.std_error)}};
}

inline Json to_json(const ConcavityProbe& c) {
  Json j{{"passed", c.passed}, {"probes", c.probes}, {"worst_gap", detail::num(c.worst_gap)}};
  j["witness"] = c.witness ? detail::nums(*c.witness) : Json(nullptr);
  return j;
}

inline Json to_json(const MPReport& r) {
  using detail::num;
  Json j{{"condition", r.condition},
         {"passed", r.passed},
         {"vacuous", r.vacuous},
         {"statistic", num(r.statistic)},
         {"tolerance", num(r.tolerance)},
         {"se_multiple", num(r.se_multiple)},
         {"sup_norm", num(r.sup_norm)},
         {"max_z", num(r.max_z)},
         {"values", detail::nums(r.values)},
         {"std_errors", detail::nums(r.std_errors)}};
  Json probes = Json::array();
  for (const auto& p : r.probes) probes.push_back(to_json(p));
  j["probes"] = probes;
  if (r.concavity) j["concavity"] = to_json(*r.concavity);
  if (r.terminal_concavity) j["terminal_concavity"] = to_json(*r.terminal_concavity);
  return j;
}

inline CoefficientModel build_model(const ScenarioConfig& c) {
  if (c.model == "linear-noisy-memory") return linear_noisy_memory_model(c.params);
  if (c.model == "consumption") return consumption_model(c.params);
  return affine_model(c.affine);
}

inline std::optional<MemoryKernel> build_kernel(const ScenarioConfig& c) {
  if (c.kernel == "ramp") return MemoryKernel::linear_ramp(c.delta);
  return std::nullopt;
}

/// sqrt(E_nu-normalised[r(zeta)^2]) of an affine mark function.
inline double mark_rms(const MarkFunction& r, const CoefficientModel& model) {
  if (!model.jumps.active()) return std::abs(r.c0);
  return std::sqrt(model.jumps.marks.expect([&](double z) { return r(z) * r(z); }));
}

struct RunOutput {
  Json report;
  bool passed = false;
  std::string paths_csv;
  std::string adjoint_csv;
};

namespace detail {

/// Adjoint used by the maximum-principle checks: the closed form, the
/// exponential adjoint of the consumption model, or the 2D regression.
inline std::vector<AdjointTriple> exact_adjoint(const ScenarioConfig& cfg, const CoefficientModel& model,
                                                const std::optional<LinearClosedForm>& closed, const Ensemble& e) {
  std::vector<AdjointTriple> out(e.size());
  if (closed) {
    parallel_for(e.size(), [&](std::size_t i) { out[i] = closed->adjoint(e.noises[i]); });
  } else if (cfg.model == "consumption") {
    out.assign(e.size(), exponential_adjoint(e.grid, cfg.params.a1));
  } else {
    out = first_components(solve_absde_2d(model, e, cfg.basis));
  }
  return out;
}

/// Shared state of one run; the 2D solution is computed on first use.
struct RunContext {
  const ScenarioConfig& cfg;
  TimeGrid grid;
  CoefficientModel model;
  std::optional<MemoryKernel> kernel;
  InformationModel info;
  std::optional<LinearClosedForm> closed;
  Ensemble ensemble;
  std::vector<AdjointTriple> adjoint;
  std::optional<AbsdeSolution> absde = std::nullopt;

  const AbsdeSolution& absde_solution() {
    if (!absde) absde = solve_absde_2d(model, ensemble, cfg.basis);
    return *absde;
  }
};

inline Json verdict(bool passed, const Json& rest) {
  Json out{{"passed", passed}};
  for (const auto& [k, v] : rest.items()) out[k] = v;
  return out;
}

inline bool within_agreement(const Estimate& a, const Estimate& b, double J, const CheckTolerances& t) {
  return std::abs(a.mean - b.mean) <= std::max(t.agreement_se * std::hypot(a.std_error, b.std_error),
                                               t.agreement_rel * std::abs(J));
}

inline Json check_closed_form(RunContext& ctx) {
  if (!ctx.closed) throw Error(ErrorKind::InvalidArgument, "needs the linear-noisy-memory model");
  const auto& cf = *ctx.closed;
  std::vector<double> t(ctx.grid.steps() + 1);
  for (std::size_t j = 0; j < t.size(); ++j) t[j] = ctx.grid.time(ctx.grid.zero_index() + j);
  return {{"passed", true},
          {"t", nums(t)},
          {"A", nums(cf.A)},
          {"alpha", nums(cf.alpha)},
          {"C", num(cf.C)},
          {"fixed_point_iterations", cf.max_iterations}};
}

inline Json check_residual_order(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto& t = c.tol;
  ResidualOrder r;
  std::string metric;
  if (ctx.closed) {
    r = closed_form_residual_order(
        ctx.model, [&](const TimeGrid& g) { return LinearBSDESpec::constant(g, c.params.a0, c.params.a1, c.params.sigma0, c.params.psi); },
        ctx.grid, t.residual_paths, c.seed, c.control_value);
    metric = "order";
  } else if (c.model == "consumption") {
    r = residual_order(
        ctx.model, [&](const TimeGrid& g) { return exponential_family(g, c.params.a0, c.params.a1); }, ctx.grid,
        t.residual_paths, c.seed, c.control_value, ctx.kernel);
    metric = "cumulative_order";
  } else {
    throw Error(ErrorKind::MalliavinUnavailable, "no closed-form adjoint for the affine model");
  }
  const double order = metric == "order" ? r.order : r.cumulative_order;
  auto rep = [](const ResidualReport& x) {
    return Json{{"sup", num(x.sup)}, {"rms", num(x.rms)}, {"cumulative_sup", num(x.cumulative_sup)}};
  };
  return {{"passed", order >= t.order_min && order <= t.order_max},
          {"metric", metric},
          {"order", num(r.order)},
          {"cumulative_order", num(r.cumulative_order)},
          {"m_coarse", ctx.grid.steps_per_delay()},
          {"m_fine", 2 * ctx.grid.steps_per_delay()},
          {"coarse", rep(r.coarse)},
          {"fine", rep(r.fine)}};
}

inline Json check_bridge(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto& e = ctx.ensemble;
  const std::size_t n = ctx.grid.steps();
  const std::size_t paths = std::min<std::size_t>(c.tol.bridge_paths, e.size());
  if (ctx.closed) {
    const auto& cf = *ctx.closed;
    const auto src = MalliavinSource::chaos1(std::vector<double>(n + 1, cf.spec.a0), cf.family());
    double q2_dev = 0.0, mu_dev = 0.0;
    for (std::size_t i = 0; i < paths; ++i) {
      const auto& adj = ctx.adjoint[i];
      const auto lift = lift_2d_from_1d(adj, src, i, e.noises[i]);
      const auto q2 = cf.q2_path(e.noises[i]);
      for (std::size_t j = 0; j < n; ++j) {
        q2_dev = std::max(q2_dev, std::abs(lift.adjoint.q2[j] - q2[j]));
        const auto h = hamiltonian(e.states[i].point(j, e.control(i)[j]), adj.p[j], adj.q[j], adj.r[j], ctx.model);
        mu_dev = std::max(mu_dev, std::abs(lift.adjoint.q2[j] + h.grad.x - adj.mu[j]));
      }
    }
    return {{"passed", q2_dev <= c.tol.deterministic && mu_dev <= c.tol.deterministic},
            {"paths", paths},
            {"q2_max_deviation", num(q2_dev)},
            {"mu1_max_deviation", num(mu_dev)},
            {"tolerance", num(c.tol.deterministic)}};
  }
  if (c.model != "consumption") throw Error(ErrorKind::MalliavinUnavailable, "no Malliavin source for the affine model");
  const auto fam = exponential_family(ctx.grid, c.params.a0, c.params.a1);
  double lifted = 0.0;
  for (std::size_t i = 0; i < paths; ++i)
    for (double v : lift_2d_from_1d(ctx.adjoint[i], fam.source, i, e.noises[i]).adjoint.q2)
      lifted = std::max(lifted, std::abs(v));
  Json out{{"paths", paths}, {"q2_lift_max", num(lifted)}};
  bool ok = lifted == 0.0;
  if (!ctx.kernel) {
    double regressed = 0.0;
    for (const auto& a : ctx.absde_solution().paths)
      for (double v : a.q2) regressed = std::max(regressed, std::abs(v));
    out["q2_absde_max"] = num(regressed);
    ok = ok && regressed == 0.0;
  }
  out = verdict(ok, out);
  return out;
}

inline Json check_absde(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto& sol = ctx.absde_solution();
  const auto& g = ctx.grid;
  const std::size_t n = g.steps();
  Json out{{"max_condition", num(sol.max_condition)}, {"paths", sol.paths.size()}};
  if (ctx.closed) {
    double err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < sol.paths.size(); ++i) {
      const auto& p = ctx.adjoint[i].p;
      for (std::size_t j = 0; j <= n; ++j) {
        err += (sol.paths[i].p1[j] - p[j]) * (sol.paths[i].p1[j] - p[j]);
        norm += p[j] * p[j];
      }
    }
    const double rms = std::sqrt(err / norm);
    out["p_relative_rms"] = num(rms);
    out["tolerance"] = num(c.tol.absde_rms);
    return verdict(rms <= c.tol.absde_rms, out);
  }
  std::vector<double> p1_mean(n + 1, 0.0);
  for (const auto& a : sol.paths)
    for (std::size_t j = 0; j <= n; ++j) p1_mean[j] += a.p1[j] / static_cast<double>(sol.paths.size());
  out["p1_mean"] = nums(p1_mean);
  if (c.model != "consumption") {
    bool finite = true;
    for (double v : p1_mean) finite = finite && std::isfinite(v);
    return verdict(finite, out);
  }
  const AdjointTriple oracle = exponential_adjoint(g, c.params.a1);
  double err = 0.0, norm = 0.0, q1 = 0.0, q2 = 0.0, r1 = 0.0, r2 = 0.0;
  for (const auto& a : sol.paths)
    for (std::size_t j = 0; j <= n; ++j) {
      err += (a.p1[j] - oracle.p[j]) * (a.p1[j] - oracle.p[j]);
      norm += oracle.p[j] * oracle.p[j];
      q1 += a.q1[j] * a.q1[j];
      q2 += a.q2[j] * a.q2[j];
      r1 += std::pow(mark_rms(a.r1[j], ctx.model), 2);
      r2 += std::pow(mark_rms(a.r2[j], ctx.model), 2);
    }
  const double count = static_cast<double>(sol.paths.size() * (n + 1));
  const double fit = std::sqrt(err / norm);
  const double zeros[] = {std::sqrt(q1 / count), std::sqrt(q2 / count), std::sqrt(r1 / count), std::sqrt(r2 / count)};
  bool ok = fit <= c.tol.fit_rms;
  for (double z : zeros) ok = ok && z <= c.tol.zero_rms;
  out["p1_fit_relative_rms"] = num(fit);
  out["p1_fit_tolerance"] = num(c.tol.fit_rms);
  out["q1_rms"] = num(zeros[0]);
  out["q2_rms"] = num(zeros[1]);
  out["r1_rms"] = num(zeros[2]);
  out["r2_rms"] = num(zeros[3]);
  out["zero_tolerance"] = num(c.tol.zero_rms);
  return verdict(ok, out);
}

inline Json check_directional(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto& e = ctx.ensemble;
  const auto battery = detail::probe_directions(ctx.grid, c.seed);
  const std::vector<std::pair<std::string, ControlPath>> probes{
      {"constant", battery[0]}, {"step_half", battery[1]}, {"random", battery[3]}};
  const Estimate J = performance(ctx.model, e.controls, c.n_paths, c.seed, ctx.kernel);
  std::optional<std::vector<AdjointTriple>> discrete;
  if (!ctx.kernel) discrete = first_components(ctx.absde_solution());
  bool ok = true;
  Json rows = Json::array();
  for (const auto& [name, eta] : probes) {
    const Estimate k = directional_derivative_K(ctx.model, e, eta);
    const Estimate fd = finite_difference_J(ctx.model, e.controls, eta, c.tol.fd_step, c.n_paths, c.seed, ctx.kernel);
    bool row_ok = within_agreement(k, fd, J.mean, c.tol);
    Json row{{"direction", name}, {"K", to_json(k)}, {"finite_difference", to_json(fd)}};
    if (discrete) {
      const Estimate h = directional_derivative_H(ctx.model, e, *discrete, eta, AdjointEvaluation::Predictable);
      row["H"] = to_json(h);
      row_ok = row_ok && within_agreement(k, h, J.mean, c.tol) && within_agreement(h, fd, J.mean, c.tol);
    } else {
      row["H"] = nullptr;
    }
    row["agree"] = row_ok;
    ok = ok && row_ok;
    rows.push_back(row);
  }
  return {{"passed", ok}, {"J", to_json(J)}, {"fd_step", num(c.tol.fd_step)}, {"probes", rows}};
}

inline Json check_foc(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto foc = solve_foc(ctx.model, ctx.ensemble, ctx.adjoint, ctx.info, 1e-13);
  const auto& g = ctx.grid;
  const std::size_t n = g.steps();
  std::vector<double> shown(n + 1, 0.0);
  const std::size_t count = foc.control.paths.size();
  for (const auto& path : foc.control.paths)
    for (std::size_t j = 0; j <= n; ++j) shown[j] += path[j] / static_cast<double>(count);
  Json out{{"information", c.information}, {"control", nums(shown)}, {"clamped", foc.clamped_count}};
  bool ok = true;
  if (c.model == "consumption") {
    double dev = 0.0;
    for (std::size_t j = 0; j <= n; ++j)
      dev = std::max(dev, std::abs(shown[j] - std::exp(-c.params.a1 * (g.horizon() - g.time(g.zero_index() + j)))));
    out["max_deviation_from_exp"] = num(dev);
    out["tolerance"] = num(c.tol.deterministic);
    ok = dev <= c.tol.deterministic;
  }
  return verdict(ok, out);
}

inline Json check_spikes(RunContext& ctx) {
  const auto& c = ctx.cfg;
  if (ctx.info != InformationModel::Trivial) throw Error(ErrorKind::InvalidArgument, "spikes need a deterministic control");
  const ControlPath& base = ctx.ensemble.control(0);
  const auto spikes = default_spikes(base, c.tol.spike_count, c.tol.spike_width, ctx.model.controls);
  const auto res =
      spike_battery(ctx.model, base, spikes, c.tol.spike_width, c.n_paths, c.seed, c.tol.spike_se, ctx.kernel);
  bool ok = true;
  Json rows = Json::array();
  for (const auto& r : res) {
    ok = ok && !r.improves;
    rows.push_back({{"t0", num(r.t0)}, {"value", num(r.value)}, {"gain", to_json(r.gain)}, {"improves", r.improves}});
  }
  return {{"passed", ok}, {"width", num(c.tol.spike_width)}, {"se_multiple", num(c.tol.spike_se)}, {"spikes", rows}};
}

}  // namespace detail

/// simulate -> adjoint(s) -> requested checks. Module errors inside a check
/// are recorded under that check's id and fail the run.
inline RunOutput run_scenario(const ScenarioConfig& c) {
  const TimeGrid grid = make_grid(c.delta, c.horizon, c.m);
  if (c.n_paths < 2) throw Error(ErrorKind::Config, "monte_carlo.n_paths must be at least 2");
  const CoefficientModel model = build_model(c);
  const auto kernel = build_kernel(c);
  const InformationModel info = c.information == "full" ? InformationModel::Full : InformationModel::Trivial;
  std::optional<LinearClosedForm> closed;
  if (c.model == "linear-noisy-memory")
    closed = solve_linear_closed_form(
        LinearBSDESpec::constant(grid, c.params.a0, c.params.a1, c.params.sigma0, c.params.psi));
  const std::string route = closed ? "closed-form" : c.model == "consumption" ? "exponential" : "absde-2d";

  const bool keep_x2 = !kernel;
  Ensemble e = simulate_ensemble(model, ControlPath::constant(grid, c.control_value, info), c.n_paths, c.seed, kernel,
                                 keep_x2);
  if (c.control == "foc") {
    const auto foc = solve_foc(model, e, detail::exact_adjoint(c, model, closed, e), info, 1e-13);
    e = ensemble_from_noises(model, foc.control, std::move(e.noises), kernel, keep_x2);
  }
  auto adjoint = detail::exact_adjoint(c, model, closed, e);
  detail::RunContext ctx{c, grid, model, kernel, info, closed, std::move(e), std::move(adjoint)};

  RunOutput out;
  Json& r = out.report;
  r["schema_version"] = kReportSchemaVersion;
  r["scenario"] = c.name;
  r["seed"] = c.seed;
  r["config"] = config_echo(c);
  r["grid"] = {{"delta", detail::num(ctx.grid.delta())},
               {"T", detail::num(ctx.grid.horizon())},
               {"m", ctx.grid.steps_per_delay()},
               {"h", detail::num(ctx.grid.step())},
               {"steps", ctx.grid.steps()}};
  r["adjoint_route"] = route;
  {
    std::vector<double> shown(ctx.grid.steps() + 1, 0.0);
    const auto& plan = ctx.ensemble.controls;
    for (const auto& path : plan.paths)
      for (std::size_t j = 0; j < shown.size(); ++j) shown[j] += path[j] / static_cast<double>(plan.paths.size());
    r["control"] = {{"kind", c.control}, {"values", detail::nums(shown)}};
  }

  Json checks = Json::object();
  bool all = true;
  for (const auto& id : c.checks) {
    Json res;
    try {
      if (id == "closed_form") res = detail::check_closed_form(ctx);
      else if (id == "residual_order") res = detail::check_residual_order(ctx);
      else if (id == "bridge") res = detail::check_bridge(ctx);
      else if (id == "absde") res = detail::check_absde(ctx);
      else if (id == "directional") res = detail::check_directional(ctx);
      else if (id == "foc") res = detail::check_foc(ctx);
      else if (id == "spikes") res = detail::check_spikes(ctx);
      else if (id == "necessary_I")
        res = to_json(check_necessary_I(ctx.model, ctx.ensemble, ctx.adjoint, ctx.info, c.tol.necessary, c.tol.se_multiple));
      else if (id == "necessary_II")
        res = to_json(check_necessary_II(ctx.model, ctx.ensemble, ctx.adjoint, ctx.info, c.tol.necessary, c.tol.se_multiple));
      else if (id == "sufficient") {
        SufficiencyOptions opt;
        opt.probe_count = c.tol.probe_count;
        opt.seed = c.seed;
        opt.concavity_tol = c.tol.necessary;
        opt.condition_tol = c.tol.necessary;
        opt.se_multiple = c.tol.se_multiple;
        res = to_json(check_sufficient(ctx.model, ctx.ensemble, ctx.adjoint, ctx.info, opt));
      }
    } catch (const Error& err) {
      res = {{"passed", false}, {"error", std::string(to_string(err.kind()))}, {"message", err.what()}};
    }
    all = all && res.value("passed", false);
    checks[id] = std::move(res);
  }
  r["checks"] = std::move(checks);
  r["passed"] = all;
  out.passed = all;

  if (c.paths_csv) {
    std::ostringstream os;
    write_state_csv(os, ctx.ensemble.states.front());
    out.paths_csv = os.str();
  }
  if (c.adjoint_csv) {
    std::ostringstream os;
    write_adjoint_csv(os, ctx.adjoint);
    out.adjoint_csv = os.str();
  }
  return out;
}

struct CatalogEntry {
  std::string tag;
  std::string model;
  std::string kernel;
  std::string config;
  std::string summary;
};

/// Built-in scenarios and the config templates shipped under configs/.
inline const std::vector<CatalogEntry>& scenario_catalog() {
  static const std::vector<CatalogEntry> entries{
      {"§7-ex1", "linear-noisy-memory", "unit", "configs/example_71.toml",
       "linear noisy memory with lognormal terminal weight: closed-form adjoint, residual order, bridge"},
      {"§7-ex2", "consumption", "unit", "configs/example_72.toml",
       "consumption with jumps: deterministic adjoint p1 = exp(a1 (T - t)), FOC control, sufficiency"},
      {"§8-ex", "consumption", "ramp", "configs/section8.toml",
       "ramp memory kernel (s - t + delta) / delta: log-utility consumption, u* = exp(-a1 (T - t))"},
      {"custom-affine", "affine", "unit", "configs/affine.toml",
       "affine dynamics with quadratic reward, adjoint from the 2D regression only"}};
  return entries;
}

inline Json catalog_json() {
  Json a = Json::array();
  for (const auto& e : scenario_catalog())
    a.push_back({{"tag", e.tag}, {"model", e.model}, {"kernel", e.kernel}, {"config", e.config}, {"summary", e.summary}});
  return a;
}

/// One line per requested check.
inline std::string summarize(const Json& report) {
  std::ostringstream os;
  for (const auto& [id, res] : report.at("checks").items()) {
    os << (res.value("passed", false) ? "PASS " : "FAIL ") << id;
    if (res.contains("error")) os << "  " << res["message"].get<std::string>();
    os << '\n';
  }
  os << (report.value("passed", false) ? "all requested checks passed" : "some checks failed") << '\n';
  return os.str();
}

}  // namespace noisymem
