#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pricecoord/coordinator.hpp"
#include "pricecoord/oracle.hpp"
#include "pricecoord/scenario.hpp"

namespace pricecoord {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "PRICECOORD_OUT";

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_time_budget = 4 };

/// One optimizer setting of an experiment grid. batch 0 means the full batch.
struct RunSetting {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.1;
  int batch = 25;

  std::string name() const;
  bool operator==(const RunSetting&) const = default;
};

struct ExperimentGrid {
  std::vector<int> homes{50, 100, 250};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<RunSetting> settings;  // defaults filled by default_settings()

  static std::vector<RunSetting> default_settings();
  void validate() const;
};

struct RunConfig {
  NeighborhoodConfig generation;
  std::optional<std::string> scenario_file;
  CoordinatorConfig coordinator;
  bool full_batch = false;
  bool batch_given = false;  // otherwise the default batch is capped at N
  std::vector<std::uint64_t> seeds{0};
  std::string out;  // empty: derived from the environment
  ExperimentGrid experiment;

  /// Throws ConfigError with the offending field path.
  void validate() const;
};

/// Parses a JSON config; missing keys keep their defaults.
RunConfig parse_config(const std::string& text, const std::string& source, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// --out, else the config's "out", else $PRICECOORD_OUT/<command>, else
/// pricecoord-out/<command>.
std::string resolve_output_dir(const RunConfig& config, const std::string& command);

/// Seed of the coordinator's random stream for scenario seed `seed`.
std::uint64_t coordinator_seed(std::uint64_t seed);

/// Scenario for one seed: generated, or loaded from the configured file.
Scenario make_scenario(const RunConfig& config, std::uint64_t seed);

/// Coordinator settings for a scenario with `n_homes` homes.
CoordinatorConfig coordinator_for(const RunConfig& config, std::uint64_t seed, int n_homes);

// CSV writers. Files are written to a temporary name and renamed.
std::string format_double(double value);
void write_file_atomic(const std::string& path, const std::string& contents);

struct RunArtifacts {
  double rms_desired = 0.0;  // RMS of desired aggregate minus Q
  double rms_optimal = 0.0;  // RMS of optimal aggregate minus Q
};

/// iterations.csv, prices.csv, loads.csv, aggregate.csv, timings.csv and
/// summary.json for one finished run.
RunArtifacts write_run_artifacts(const std::string& dir, const Scenario& scenario, const RunResult& result,
                                 std::uint64_t seed, double setup_ms);

int run_command(const RunConfig& config, std::ostream& log);
int generate_command(const RunConfig& config, std::ostream& log);

struct GradcheckOptions {
  double tolerance = 1e-4;
  bool corrupt_sign = false;  // fault injection: negate the implicit gradient
  FdConfig fd;
};

struct GradcheckReport {
  Eigen::VectorXd implicit;
  Eigen::VectorXd finite_difference;
  double max_relative_error = 0.0;
  int worst_slot = 0;
  std::vector<int> degenerate_homes;
  bool pass = false;
};

/// ||g - fd||_inf / (1 + ||fd||_inf) at `price`.
GradcheckReport gradcheck(const Scenario& scenario, const PriceVector& price, const GradcheckOptions& options,
                          const Execution& exec = {});
int gradcheck_command(const RunConfig& config, const GradcheckOptions& options, std::ostream& log);

struct ExperimentRow {
  int homes = 0;
  std::uint64_t seed = 0;
  std::string setting;
  std::string status;  // ok, time_budget, or failed: ...
  int iterations = 0;
  double z_initial = 0.0;
  double z_final = 0.0;
  double wall_s = 0.0;
};

struct SettingSummary {
  std::string setting;
  int runs = 0;
  int failures = 0;
  int wins = 0;
  double mean_wall_s = 0.0;
  double average_rank = 0.0;
  int ranked_blocks = 0;
};

/// Wins and average ranks over (homes, seed) blocks; failed runs are
/// excluded. Tied objectives share a win and average their ranks.
std::vector<SettingSummary> summarize_experiment(const std::vector<ExperimentRow>& rows,
                                                 const std::vector<std::string>& setting_order);

/// (z_baseline - z_method) / z_method
double improvement_ratio(double z_baseline, double z_method);

struct BaselineEntry {
  int homes = 0;
  std::uint64_t seed = 0;
  double z = 0.0;
};

/// CSV with header homes,seed,z.
std::vector<BaselineEntry> load_baseline(const std::string& path);

std::vector<ExperimentRow> read_runs_csv(const std::string& path);

int experiment_command(const RunConfig& config, const std::optional<std::string>& baseline, std::ostream& log);

int oracle_command(const RunConfig& config, std::ostream& log);

}  // namespace pricecoord
