#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "noisymem/acceptance.hpp"
#include "noisymem/scenario.hpp"

namespace fs = std::filesystem;
using namespace noisymem;

namespace {

constexpr int kChecksFailed = 1;
constexpr int kError = 2;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
  out << text;
}

int run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
        const std::optional<std::string>& out_dir) {
  ScenarioConfig cfg = load_scenario_file(config_path);
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.output_dir = *out_dir;
  const RunOutput out = run_scenario(cfg);
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  write_file(dir / "report.json", out.report.dump(2) + "\n");
  if (cfg.paths_csv) write_file(dir / "paths.csv", out.paths_csv);
  if (cfg.adjoint_csv) write_file(dir / "adjoint.csv", out.adjoint_csv);
  std::cout << summarize(out.report) << "report: " << (dir / "report.json").string() << '\n';
  return out.passed ? EXIT_SUCCESS : kChecksFailed;
}

int list(bool json) {
  if (json) {
    std::cout << catalog_json().dump(2) << '\n';
    return EXIT_SUCCESS;
  }
  for (const auto& e : scenario_catalog())
    std::cout << std::left << std::setw(15) << e.tag << std::setw(21) << e.model << std::setw(6) << e.kernel
              << e.config << "\n    " << e.summary << '\n';
  return EXIT_SUCCESS;
}

int verify(std::uint64_t seed, const std::optional<std::string>& out_dir, bool corrupt) {
  AcceptanceOptions opt;
  opt.seed = seed;
  opt.corrupt_oracle = corrupt;
  const auto report = verify_all(opt, [](const CriterionResult& r) { std::cout << verdict_line(r) << std::endl; });
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_file(fs::path(*out_dir) / "report.json", report.report.dump(2) + "\n");
  }
  std::cout << (report.passed ? "verify: all criteria passed" : "verify: FAILED") << '\n';
  return report.passed ? EXIT_SUCCESS : kChecksFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic control with noisy memory: scenario runner and acceptance suite"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::string> run_out;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario config and write report.json, paths.csv, adjoint.csv");
  run_cmd->add_option("config", config, "Scenario config file")->required();
  run_cmd->add_option("--seed", run_seed, "Override monte_carlo.seed");
  run_cmd->add_option("--out", run_out, "Override output.directory");

  bool as_json = false;
  auto* list_cmd = app.add_subcommand("list", "Print the built-in scenario catalog");
  list_cmd->add_flag("--json", as_json, "Machine-readable catalog");

  std::uint64_t verify_seed = 1;
  std::optional<std::string> verify_out;
  bool corrupt = false;
  auto* verify_cmd = app.add_subcommand("verify", "Run the acceptance suite, one verdict line per criterion");
  verify_cmd->add_option("--seed", verify_seed, "Seed of every Monte-Carlo stage");
  verify_cmd->add_option("--out", verify_out, "Directory for report.json");
  verify_cmd->add_flag("--corrupt-oracle", corrupt, "Use a wrong a1 in the jump-consumption oracle (negative control)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(config, run_seed, run_out);
    if (*list_cmd) return list(as_json);
    if (*verify_cmd) return verify(verify_seed, verify_out, corrupt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}
