#include <algorithm>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pricecoord/errors.hpp"
#include "pricecoord/harness.hpp"

using namespace pricecoord;

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> scenario;
  std::optional<int> homes;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> batch;
  std::optional<std::string> optimizer;
  std::optional<double> lr;
  std::optional<int> kmax;
  std::optional<double> eps;
  std::optional<std::string> scaling;
  std::optional<std::string> out;
  std::optional<double> time_budget;
  std::optional<int> workers;
};

void add_common_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--scenario", f.scenario, "serialized scenario instead of generating one");
  cmd->add_option("--homes", f.homes, "number of homes");
  cmd->add_option("--seed", f.seed, "scenario seed (experiment: first of the seeds)");
  cmd->add_option("--batch", f.batch, "batch size B or 'full'");
  cmd->add_option("--optimizer", f.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--kmax", f.kmax, "iteration cap");
  cmd->add_option("--eps", f.eps, "relative stopping tolerance");
  cmd->add_option("--scaling", f.scaling, "gradient scaling: sum or unbiased")->check(CLI::IsMember({"sum", "unbiased"}));
  cmd->add_option("--out", f.out, std::string("output directory (default $") + kOutputRootEnv + "/<command>)");
  cmd->add_option("--time-budget", f.time_budget, "wall-clock limit per run in seconds (default 900)");
  cmd->add_option("--workers", f.workers, "worker threads, 0 for the OpenMP default");
}

int parse_batch_flag(const std::string& text) {
  if (text == "full") return 0;
  try {
    std::size_t used = 0;
    const int b = std::stoi(text, &used);
    if (used == text.size() && b >= 1) return b;
  } catch (const std::exception&) {
  }
  throw ConfigError("--batch: expected a positive integer or 'full'");
}

RunConfig build_config(const std::string& command, const Flags& f) {
  RunConfig base;
  base.coordinator.time_budget = 900.0;
  base.experiment.settings = ExperimentGrid::default_settings();
  if (command == "gradcheck") {
    base.generation.n_homes = 3;
    base.generation.horizon = 8;
  }
  RunConfig c = f.config ? load_config(*f.config, base) : base;

  if (f.scenario) c.scenario_file = *f.scenario;
  if (f.homes) {
    c.generation.n_homes = *f.homes;
    c.experiment.homes = {*f.homes};
  }
  if (f.seed) {
    c.seeds = {*f.seed};
    const std::size_t count = c.experiment.seeds.size();
    c.experiment.seeds.clear();
    for (std::size_t k = 0; k < count; ++k) c.experiment.seeds.push_back(*f.seed + k);
  }
  if (f.batch) {
    const int b = parse_batch_flag(*f.batch);
    c.full_batch = b == 0;
    c.batch_given = true;
    if (b > 0) c.coordinator.batch_size = b;
  }
  if (f.optimizer) c.coordinator.optimizer = *f.optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::scaled_sgd;
  if (f.lr) c.coordinator.learning_rate = *f.lr;
  if (f.kmax) c.coordinator.k_max = *f.kmax;
  if (f.eps) c.coordinator.epsilon = *f.eps;
  if (f.scaling) c.coordinator.scaling = *f.scaling == "sum" ? GradientScaling::sum : GradientScaling::unbiased;
  if (f.out) c.out = *f.out;
  if (f.time_budget) c.coordinator.time_budget = *f.time_budget;
  if (f.workers) c.coordinator.execution.workers = *f.workers;

  // Experiment settings take the optimizer flags as overrides.
  if (f.optimizer || f.lr || f.batch) {
    std::vector<RunSetting> settings;
    for (RunSetting s : c.experiment.settings) {
      if (f.optimizer) s.optimizer = c.coordinator.optimizer;
      if (f.lr) s.learning_rate = *f.lr;
      if (f.batch) s.batch = c.full_batch ? 0 : c.coordinator.batch_size;
      if (std::find(settings.begin(), settings.end(), s) == settings.end()) settings.push_back(s);
    }
    c.experiment.settings = settings;
  }
  if (c.scenario_file) {
    // B is checked against the loaded scenario's size
    c.generation = NeighborhoodConfig{};
  }
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Price coordination of home energy schedules"};
  app.require_subcommand(1);
  Flags flags;
  GradcheckOptions gradcheck_options;
  std::optional<std::string> baseline;

  auto* generate = app.add_subcommand("generate", "generate and save a scenario");
  auto* run = app.add_subcommand("run", "run the coordination loop and write CSVs");
  auto* check = app.add_subcommand("gradcheck", "compare implicit and finite-difference gradients");
  auto* experiment = app.add_subcommand("experiment", "sweep sizes, seeds and optimizer settings");
  auto* oracle = app.add_subcommand("oracle", "run the independent oracle checks");
  for (auto* cmd : {generate, run, check, experiment, oracle}) add_common_flags(cmd, flags);
  check->add_option("--tolerance", gradcheck_options.tolerance, "pass threshold on the relative error");
  check->add_option("--fd-step", gradcheck_options.fd.step, "central-difference step");
  check->add_flag("--corrupt-sign", gradcheck_options.corrupt_sign, "negate the implicit gradient (fault injection)");
  experiment->add_option("--baseline", baseline, "CSV homes,seed,z of baseline objectives");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig config = build_config(command, flags);
    if (command == "generate") return generate_command(config, std::cout);
    if (command == "run") return run_command(config, std::cout);
    if (command == "gradcheck") return gradcheck_command(config, gradcheck_options, std::cout);
    if (command == "experiment") return experiment_command(config, baseline, std::cout);
    return oracle_command(config, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible (" << e.row_label() << "): " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  }
}
