#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "goodwill/cli/commands.hpp"

namespace gc = goodwill::cli;

int main(int argc, char** argv) {
  CLI::App app{"Singular stochastic control solver for one-dimensional diffusions"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed, paths;
  std::optional<double> dt;
  std::string parameter;
  std::vector<double> values;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Problem description (.ini or .json)")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides [output] directory)");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--paths", paths, "Number of Monte Carlo paths");
    sub->add_option("--dt", dt, "Simulation time step");
  };
  auto* solve = app.add_subcommand("solve", "Solve for the regime, boundary and value function");
  auto* verify = app.add_subcommand("verify", "Solve and check HJB, derivative identity and Wronskian");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo check of the value at the configured x0 list");
  auto* sweep = app.add_subcommand("sweep", "Re-solve over a list of parameter values");
  for (auto* sub : {solve, verify, simulate, sweep}) add_common(sub);
  sweep->add_option("--param", parameter, "Parameter to vary (overrides [sweep] parameter)");
  sweep->add_option("--values", values, "Comma-separated values (overrides [sweep] values)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? gc::kExitOk : gc::kExitConfig;
  }

  gc::RunConfig cfg;
  const int load = gc::guarded(std::cerr, [&] {
    cfg = gc::load_config(config_path);
    if (out_dir) cfg.out_dir = *out_dir;
    if (seed) cfg.sim.seed = *seed;
    if (paths) cfg.sim.n_paths = *paths;
    if (dt) cfg.sim.dt = *dt;
    cfg.sim.validate();
    return gc::kExitOk;
  });
  if (load != gc::kExitOk) return load;

  if (*solve) return gc::cmd_solve(cfg, std::cout, std::cerr);
  if (*verify) return gc::cmd_verify(cfg, std::cout, std::cerr);
  if (*simulate) return gc::cmd_simulate(cfg, std::cout, std::cerr);
  if (!parameter.empty()) cfg.sweep_parameter = parameter;
  if (!values.empty()) cfg.sweep_values = values;
  return gc::cmd_sweep(cfg, cfg.sweep_parameter, cfg.sweep_values, std::cout, std::cerr);
}
