#include "pricecoord/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "pricecoord/acceptance.hpp"
#include "pricecoord/errors.hpp"
#include "pricecoord/json_io.hpp"
#include "pricecoord/oracle.hpp"

namespace fs = std::filesystem;

namespace pricecoord {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

OptimizerKind parse_optimizer(const std::string& name, const std::string& where) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::scaled_sgd;
  throw ConfigError(where + ": expected adam or sgd, got '" + name + "'");
}

GradientScaling parse_scaling(const std::string& name, const std::string& where) {
  if (name == "sum") return GradientScaling::sum;
  if (name == "unbiased") return GradientScaling::unbiased;
  throw ConfigError(where + ": expected sum or unbiased, got '" + name + "'");
}

/// "full" -> 0, otherwise a positive integer.
int parse_batch(const Json& value, const std::string& where) {
  if (value.is_string() && value.get<std::string>() == "full") return 0;
  if (value.is_number_integer() && value.get<long>() >= 1) return value.get<int>();
  throw ConfigError(where + ": expected a positive integer or \"full\"");
}

std::vector<std::uint64_t> parse_seeds(const Json& value, const std::string& where) {
  std::vector<std::uint64_t> seeds;
  if (value.is_number_unsigned()) {
    for (std::uint64_t s = 0; s < value.get<std::uint64_t>(); ++s) seeds.push_back(s);
    return seeds;
  }
  if (!value.is_array()) throw ConfigError(where + ": expected a count or a list of seeds");
  for (const auto& s : value) {
    if (!s.is_number_unsigned()) throw ConfigError(where + ": seeds must be nonnegative integers");
    seeds.push_back(s.get<std::uint64_t>());
  }
  return seeds;
}

void merge_coordinator(const Json& j, RunConfig& config) {
  const std::string where = "coordinator";
  reject_unknown_keys(j, {"batch", "optimizer", "lr", "k_max", "eps", "scaling", "beta1", "beta2", "adam_eps",
                          "time_budget", "workers"},
                      where);
  auto& c = config.coordinator;
  if (j.contains("batch")) {
    const int b = parse_batch(j.at("batch"), where + ".batch");
    config.full_batch = b == 0;
    config.batch_given = true;
    if (b > 0) c.batch_size = b;
  }
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(read<std::string>(j, "optimizer", where), where + ".optimizer");
  if (j.contains("scaling")) c.scaling = parse_scaling(read<std::string>(j, "scaling", where), where + ".scaling");
  read_if(j, "lr", c.learning_rate, where);
  read_if(j, "k_max", c.k_max, where);
  read_if(j, "eps", c.epsilon, where);
  read_if(j, "beta1", c.beta1, where);
  read_if(j, "beta2", c.beta2, where);
  read_if(j, "adam_eps", c.adam_epsilon, where);
  read_if(j, "time_budget", c.time_budget, where);
  read_if(j, "workers", c.execution.workers, where);
}

void merge_experiment(const Json& j, ExperimentGrid& grid) {
  const std::string where = "experiment";
  reject_unknown_keys(j, {"homes", "seeds", "settings"}, where);
  if (j.contains("homes")) {
    const auto& h = j.at("homes");
    if (!h.is_array()) throw ConfigError(where + ".homes: expected a list");
    grid.homes.clear();
    for (const auto& n : h) {
      if (!n.is_number_integer()) throw ConfigError(where + ".homes: expected integers");
      grid.homes.push_back(n.get<int>());
    }
  }
  if (j.contains("seeds")) grid.seeds = parse_seeds(j.at("seeds"), where + ".seeds");
  if (j.contains("settings")) {
    const auto& list = j.at("settings");
    if (!list.is_array()) throw ConfigError(where + ".settings: expected a list");
    grid.settings.clear();
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string sw = where + ".settings[" + std::to_string(k) + "]";
      const auto& s = list[k];
      reject_unknown_keys(s, {"optimizer", "lr", "batch"}, sw);
      RunSetting setting;
      if (s.contains("optimizer")) setting.optimizer = parse_optimizer(read<std::string>(s, "optimizer", sw), sw);
      read_if(s, "lr", setting.learning_rate, sw);
      if (s.contains("batch")) setting.batch = parse_batch(s.at("batch"), sw + ".batch");
      grid.settings.push_back(setting);
    }
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void make_directory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir);
}

double rms(const Eigen::VectorXd& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

std::string iterations_csv(const RunResult& result) {
  std::ostringstream out;
  out << "k,z,grad_norm,skipped_homes,degenerate_homes\n";
  for (const auto& rec : result.trace) {
    out << rec.k << ',' << format_double(rec.z) << ',' << format_double(rec.grad_norm) << ',' << rec.skipped.size()
        << ',' << rec.degenerate.size() << '\n';
  }
  return out.str();
}

std::string timings_csv(const RunResult& result, double setup_ms) {
  std::ostringstream out;
  out << "phase,k,wall_ms\n";
  out << "setup,0," << format_double(setup_ms) << '\n';
  for (const auto& rec : result.trace) out << "iteration," << rec.k << ',' << format_double(rec.wall_ms) << '\n';
  out << "coordination,0," << format_double(result.wall_ms) << '\n';
  return out.str();
}

}  // namespace

std::string RunSetting::name() const {
  char lr[32];
  std::snprintf(lr, sizeof lr, "%g", learning_rate);
  return std::string(to_string(optimizer)) + "_lr" + lr + "_" + (batch == 0 ? "full" : "B" + std::to_string(batch));
}

std::vector<RunSetting> ExperimentGrid::default_settings() {
  std::vector<RunSetting> out;
  const std::pair<OptimizerKind, double> steps[] = {{OptimizerKind::adam, 1e-1},
                                                    {OptimizerKind::adam, 1e0},
                                                    {OptimizerKind::scaled_sgd, 1e-5},
                                                    {OptimizerKind::scaled_sgd, 1e-6}};
  for (const auto& [optimizer, lr] : steps) {
    for (int batch : {25, 0}) out.push_back({optimizer, lr, batch});
  }
  return out;
}

void ExperimentGrid::validate() const {
  if (homes.empty()) throw ConfigError("experiment.homes: empty");
  if (seeds.empty()) throw ConfigError("experiment.seeds: empty");
  if (settings.empty()) throw ConfigError("experiment.settings: empty");
  for (int n : homes) {
    if (n < 1) throw ConfigError("experiment.homes: home counts must be positive");
  }
  for (const auto& s : settings) {
    if (!(s.learning_rate > 0.0) || !std::isfinite(s.learning_rate)) {
      throw ConfigError("experiment.settings: lr must be positive");
    }
    if (s.batch < 0) throw ConfigError("experiment.settings: batch must be positive or full");
  }
}

void RunConfig::validate() const {
  generation.validate();
  if (seeds.empty()) throw ConfigError("seeds: empty");
  const int n = scenario_file ? std::max(coordinator.batch_size, 1) : generation.n_homes;
  CoordinatorConfig c = coordinator;
  if (full_batch) c.batch_size = n;
  if (!batch_given) c.batch_size = std::min(c.batch_size, n);
  try {
    c.validate(n);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("coordinator.") + e.what());
  }
  experiment.validate();
}

RunConfig parse_config(const std::string& text, const std::string& source, RunConfig base) {
  const Json doc = parse_json_text(text, source);
  reject_unknown_keys(doc, {"neighborhood", "scenario_file", "coordinator", "seeds", "out", "experiment"}, source);
  RunConfig config = std::move(base);
  if (doc.contains("neighborhood") && doc.contains("scenario_file")) {
    throw ConfigError(source + ": give either neighborhood or scenario_file, not both");
  }
  if (doc.contains("neighborhood")) merge_json(doc.at("neighborhood"), config.generation);
  if (doc.contains("scenario_file")) {
    auto path = fs::path(read<std::string>(doc, "scenario_file", "config"));
    if (path.is_relative()) path = fs::path(source).parent_path() / path;
    config.scenario_file = path.string();
  }
  if (doc.contains("coordinator")) merge_coordinator(doc.at("coordinator"), config);
  if (doc.contains("seeds")) config.seeds = parse_seeds(doc.at("seeds"), "seeds");
  read_if(doc, "out", config.out, "config");
  if (doc.contains("experiment")) merge_experiment(doc.at("experiment"), config.experiment);
  if (config.experiment.settings.empty()) config.experiment.settings = ExperimentGrid::default_settings();
  config.validate();
  return config;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  return parse_config(read_text(path), path, std::move(base));
}

std::string resolve_output_dir(const RunConfig& config, const std::string& command) {
  if (!config.out.empty()) return config.out;
  const char* root = std::getenv(kOutputRootEnv);
  const fs::path base = root != nullptr && *root != '\0' ? fs::path(root) : fs::path("pricecoord-out");
  return (base / command).string();
}

std::uint64_t coordinator_seed(std::uint64_t seed) { return derive_seed(seed, 1); }

Scenario make_scenario(const RunConfig& config, std::uint64_t seed) {
  if (config.scenario_file) return load_scenario(*config.scenario_file);
  NeighborhoodConfig g = config.generation;
  g.seed = seed;
  try {
    return generate_neighborhood(g);
  } catch (const InfeasibleError& e) {
    throw ConfigError(std::string("neighborhood: ") + e.what());
  }
}

CoordinatorConfig coordinator_for(const RunConfig& config, std::uint64_t seed, int n_homes) {
  CoordinatorConfig c = config.coordinator;
  c.seed = coordinator_seed(seed);
  if (config.full_batch) c.batch_size = n_homes;
  if (!config.batch_given) c.batch_size = std::min(c.batch_size, n_homes);
  try {
    c.validate(n_homes);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("coordinator.") + e.what());
  }
  return c;
}

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    out << contents;
    if (!out) throw ConfigError("cannot write " + path);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot write " + path + ": " + ec.message());
}

RunArtifacts write_run_artifacts(const std::string& dir, const Scenario& scenario, const RunResult& result,
                                 std::uint64_t seed, double setup_ms) {
  make_directory(dir);
  const int K = scenario.horizon();
  const fs::path root(dir);

  write_file_atomic((root / "iterations.csv").string(), iterations_csv(result));

  std::ostringstream prices;
  prices << "t,price,initial_price\n";
  for (int t = 0; t < K; ++t) {
    prices << t << ',' << format_double(result.final_price(t)) << ',' << format_double(result.initial_price(t)) << '\n';
  }
  write_file_atomic((root / "prices.csv").string(), prices.str());

  std::ostringstream loads;
  loads << "home,appliance,kind,t,p_star,p_bar\n";
  Schedules desired;
  for (int i = 0; i < scenario.num_homes(); ++i) {
    const auto& home = scenario.homes[i];
    const auto& p = result.final_solutions[i].p_star;
    for (int j = 0; j < home.num_appliances(); ++j) {
      const std::string& kind = home.polyhedron.block(j).appliance;
      for (int t = 0; t < K; ++t) {
        loads << i << ',' << j << ',' << kind << ',' << t << ',' << format_double(p(j * K + t)) << ','
              << format_double(home.desired(j, t)) << '\n';
      }
    }
    desired.push_back(stack_rows(home.desired));
  }
  write_file_atomic((root / "loads.csv").string(), loads.str());

  const Eigen::VectorXd desired_load = aggregate_load(desired, K);
  const Eigen::VectorXd optimal_load = aggregate_load(schedules_of(result.final_solutions), K);
  std::ostringstream aggregate;
  aggregate << "t,Q,desired_aggregate,optimal_aggregate\n";
  for (int t = 0; t < K; ++t) {
    aggregate << t << ',' << format_double(scenario.target(t)) << ',' << format_double(desired_load(t)) << ','
              << format_double(optimal_load(t)) << '\n';
  }
  write_file_atomic((root / "aggregate.csv").string(), aggregate.str());
  write_file_atomic((root / "timings.csv").string(), timings_csv(result, setup_ms));

  RunArtifacts a;
  a.rms_desired = rms(desired_load - scenario.target);
  a.rms_optimal = rms(optimal_load - scenario.target);

  Json summary;
  summary["csv_schema_version"] = kCsvSchemaVersion;
  summary["homes"] = scenario.num_homes();
  summary["horizon"] = K;
  summary["seed"] = seed;
  summary["stop"] = to_string(result.stop);
  summary["iterations"] = result.trace.size();
  summary["z_initial"] = result.z_initial;
  summary["z_final"] = result.final_z();
  summary["rms_desired"] = a.rms_desired;
  summary["rms_optimal"] = a.rms_optimal;
  summary["setup_ms"] = setup_ms;
  summary["coordination_ms"] = result.wall_ms;
  write_file_atomic((root / "summary.json").string(), summary.dump(1) + "\n");
  return a;
}

int run_command(const RunConfig& config, std::ostream& log) {
  const std::string dir = resolve_output_dir(config, "run");
  make_directory(dir);
  int code = exit_ok;
  for (const std::uint64_t seed : config.seeds) {
    const auto start = std::chrono::steady_clock::now();
    const Scenario scenario = make_scenario(config, seed);
    const CoordinatorConfig cc = coordinator_for(config, seed, scenario.num_homes());
    const double setup_ms = elapsed_ms(start);
    log << "seed " << seed << ": " << scenario.num_homes() << " homes, K=" << scenario.horizon() << ", B="
        << cc.batch_size << ", " << to_string(cc.optimizer) << " lr=" << cc.learning_rate << '\n';
    const RunResult result = run_coordination(scenario, cc, [&](const IterationRecord& rec) {
      log << "  k=" << rec.k << " z=" << format_double(rec.z) << " |g|=" << rec.grad_norm
          << " skipped=" << rec.skipped.size() << " degenerate=" << rec.degenerate.size() << '\n';
    });
    const std::string sub = config.seeds.size() == 1 ? dir : (fs::path(dir) / ("seed-" + std::to_string(seed))).string();
    const auto a = write_run_artifacts(sub, scenario, result, seed, setup_ms);
    log << "seed " << seed << ": stop=" << to_string(result.stop) << " iterations=" << result.trace.size()
        << " z_initial=" << format_double(result.z_initial) << " z_final=" << format_double(result.final_z())
        << " rms_desired=" << a.rms_desired << " rms_optimal=" << a.rms_optimal << " wall_ms=" << result.wall_ms
        << " -> " << sub << '\n';
    if (result.stop == StopReason::time_budget) code = exit_time_budget;
  }
  return code;
}

int generate_command(const RunConfig& config, std::ostream& log) {
  const std::string dir = resolve_output_dir(config, "generate");
  make_directory(dir);
  for (const std::uint64_t seed : config.seeds) {
    const Scenario scenario = make_scenario(config, seed);
    const std::string name = config.seeds.size() == 1 ? "scenario.json" : "scenario-" + std::to_string(seed) + ".json";
    const std::string path = (fs::path(dir) / name).string();
    write_file_atomic(path, scenario_to_json(scenario));
    int attempts = 0;
    for (const auto& h : scenario.homes) attempts += h.attempts;
    log << "seed " << seed << ": " << scenario.num_homes() << " homes, K=" << scenario.horizon()
        << ", draws=" << attempts << " -> " << path << '\n';
  }
  return exit_ok;
}

GradcheckReport gradcheck(const Scenario& scenario, const PriceVector& price, const GradcheckOptions& options,
                          const Execution& exec) {
  GradcheckReport r;
  r.finite_difference = finite_difference_gradient(scenario, price, options.fd, exec);
  r.implicit = implicit_gradient(scenario, price, exec);
  if (options.corrupt_sign) r.implicit = -r.implicit;
  const Eigen::VectorXd diff = (r.implicit - r.finite_difference).cwiseAbs();
  Eigen::Index worst = 0;
  const double max_diff = diff.maxCoeff(&worst);
  r.worst_slot = static_cast<int>(worst);
  r.max_relative_error = max_diff / (1.0 + r.finite_difference.cwiseAbs().maxCoeff());
  r.pass = r.max_relative_error <= options.tolerance;

  auto solvers = make_home_solvers(scenario);
  const auto solutions = solve_all(solvers, price, nullptr, exec);
  for (int i = 0; i < scenario.num_homes(); ++i) {
    if (active_set(solutions[i], scenario.homes[i].polyhedron).degenerate()) r.degenerate_homes.push_back(i);
  }
  return r;
}

int gradcheck_command(const RunConfig& config, const GradcheckOptions& options, std::ostream& log) {
  const std::string dir = resolve_output_dir(config, "gradcheck");
  make_directory(dir);
  bool all_pass = true;
  for (const std::uint64_t seed : config.seeds) {
    const Scenario scenario = make_scenario(config, seed);
    if (scenario.num_homes() > 10 || scenario.horizon() > 16) {
      throw ConfigError("gradcheck: needs N <= 10 and K <= 16 (got N=" + std::to_string(scenario.num_homes()) +
                        ", K=" + std::to_string(scenario.horizon()) + ")");
    }
    Rng rng(coordinator_seed(seed));
    PriceVector price(scenario.horizon());
    for (int t = 0; t < scenario.horizon(); ++t) price(t) = rng.uniform(scenario.config.price_low, scenario.config.price_high);
    const auto r = gradcheck(scenario, price, options, Execution{ExecPolicy::parallel, config.coordinator.execution.workers});

    std::ostringstream csv;
    csv << "t,price,implicit,finite_difference,abs_error\n";
    log << "seed " << seed << ":\n   t        price         implicit    finite_diff\n";
    for (int t = 0; t < scenario.horizon(); ++t) {
      csv << t << ',' << format_double(price(t)) << ',' << format_double(r.implicit(t)) << ','
          << format_double(r.finite_difference(t)) << ',' << format_double(std::abs(r.implicit(t) - r.finite_difference(t)))
          << '\n';
      char line[128];
      std::snprintf(line, sizeof line, "%4d %12.6f %16.9g %14.9g\n", t, price(t), r.implicit(t), r.finite_difference(t));
      log << line;
    }
    const std::string name = config.seeds.size() == 1 ? "gradcheck.csv" : "gradcheck-" + std::to_string(seed) + ".csv";
    write_file_atomic((fs::path(dir) / name).string(), csv.str());
    log << "max relative error " << r.max_relative_error << " (tolerance " << options.tolerance << "), worst slot "
        << r.worst_slot << ", degenerate homes " << r.degenerate_homes.size() << ": " << (r.pass ? "PASS" : "FAIL")
        << '\n';
    all_pass = all_pass && r.pass;
  }
  return all_pass ? exit_ok : exit_numerical;
}

std::vector<SettingSummary> summarize_experiment(const std::vector<ExperimentRow>& rows,
                                                 const std::vector<std::string>& setting_order) {
  std::vector<SettingSummary> out;
  std::map<std::string, std::size_t> index;
  for (const auto& name : setting_order) {
    index[name] = out.size();
    out.push_back({name});
  }
  std::map<std::pair<int, std::uint64_t>, std::vector<const ExperimentRow*>> blocks;
  std::vector<double> wall_sum(out.size(), 0.0);
  for (const auto& row : rows) {
    auto it = index.find(row.setting);
    if (it == index.end()) {
      index[row.setting] = out.size();
      out.push_back({row.setting});
      wall_sum.push_back(0.0);
      it = index.find(row.setting);
    }
    auto& s = out[it->second];
    ++s.runs;
    const bool ok = row.status == "ok" || row.status == "time_budget";
    if (!ok) {
      ++s.failures;
      continue;
    }
    wall_sum[it->second] += row.wall_s;
    blocks[{row.homes, row.seed}].push_back(&row);
  }
  std::vector<double> rank_sum(out.size(), 0.0);
  for (auto& [key, members] : blocks) {
    std::stable_sort(members.begin(), members.end(),
                     [](const ExperimentRow* a, const ExperimentRow* b) { return a->z_final < b->z_final; });
    std::size_t k = 0;
    while (k < members.size()) {
      std::size_t end = k;
      while (end + 1 < members.size() && members[end + 1]->z_final == members[k]->z_final) ++end;
      // positions k..end share the average of ranks k+1..end+1
      const double rank = 0.5 * static_cast<double>(k + end) + 1.0;
      for (std::size_t m = k; m <= end; ++m) {
        const std::size_t s = index[members[m]->setting];
        rank_sum[s] += rank;
        ++out[s].ranked_blocks;
        if (k == 0) ++out[s].wins;
      }
      k = end + 1;
    }
  }
  for (std::size_t s = 0; s < out.size(); ++s) {
    const int ok = out[s].runs - out[s].failures;
    out[s].mean_wall_s = ok > 0 ? wall_sum[s] / ok : 0.0;
    out[s].average_rank = out[s].ranked_blocks > 0 ? rank_sum[s] / out[s].ranked_blocks : 0.0;
  }
  return out;
}

double improvement_ratio(double z_baseline, double z_method) { return (z_baseline - z_method) / z_method; }

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path, const std::string& header) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != header) throw ConfigError(path + ": expected header " + header);
  std::vector<std::vector<std::string>> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
    rows.back().push_back(std::to_string(number));
  }
  return rows;
}

double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": not a number '" + s + "'");
  }
}

const char* kRunsHeader = "homes,seed,setting,status,iterations,z_initial,z_final,wall_s";

}  // namespace

std::vector<BaselineEntry> load_baseline(const std::string& path) {
  std::vector<BaselineEntry> out;
  for (const auto& r : read_csv_rows(path, "homes,seed,z")) {
    const std::string where = path + ":" + r.back();
    if (r.size() != 4) throw ConfigError(where + ": expected 3 columns");
    out.push_back({static_cast<int>(to_double(r[0], where)), static_cast<std::uint64_t>(to_double(r[1], where)),
                   to_double(r[2], where)});
  }
  return out;
}

std::vector<ExperimentRow> read_runs_csv(const std::string& path) {
  std::vector<ExperimentRow> out;
  for (const auto& r : read_csv_rows(path, kRunsHeader)) {
    const std::string where = path + ":" + r.back();
    if (r.size() != 9) throw ConfigError(where + ": expected 8 columns");
    ExperimentRow row;
    row.homes = static_cast<int>(to_double(r[0], where));
    row.seed = static_cast<std::uint64_t>(to_double(r[1], where));
    row.setting = r[2];
    row.status = r[3];
    row.iterations = static_cast<int>(to_double(r[4], where));
    row.z_initial = to_double(r[5], where);
    row.z_final = to_double(r[6], where);
    row.wall_s = to_double(r[7], where);
    out.push_back(row);
  }
  return out;
}

int experiment_command(const RunConfig& config, const std::optional<std::string>& baseline, std::ostream& log) {
  const ExperimentGrid& grid = config.experiment;
  grid.validate();
  const std::string dir = resolve_output_dir(config, "experiment");
  make_directory(dir);
  const std::vector<BaselineEntry> baseline_rows = baseline ? load_baseline(*baseline) : std::vector<BaselineEntry>{};

  struct Block {
    int homes;
    std::uint64_t seed;
    Scenario scenario;
    std::string error;
  };
  std::vector<Block> blocks;
  for (int n : grid.homes) {
    for (std::uint64_t seed : grid.seeds) blocks.push_back({n, seed, {}, {}});
  }
  const Execution outer{ExecPolicy::parallel, config.coordinator.execution.workers};
  log << "generating " << blocks.size() << " scenarios\n";
  for_each_index(static_cast<int>(blocks.size()), outer, [&](int b) {
    RunConfig rc = config;
    rc.generation.n_homes = blocks[b].homes;
    try {
      blocks[b].scenario = make_scenario(rc, blocks[b].seed);
    } catch (const std::exception& e) {
      blocks[b].error = e.what();
    }
  });

  const int n_settings = static_cast<int>(grid.settings.size());
  const int n_cells = static_cast<int>(blocks.size()) * n_settings;
  std::vector<ExperimentRow> rows(n_cells);
  log << "running " << n_cells << " cells\n";
  for_each_index(n_cells, outer, [&](int cell) {
    const Block& block = blocks[cell / n_settings];
    const RunSetting& setting = grid.settings[cell % n_settings];
    ExperimentRow& row = rows[cell];
    row.homes = block.homes;
    row.seed = block.seed;
    row.setting = setting.name();
    if (!block.error.empty()) {
      row.status = "failed: " + block.error;
      return;
    }
    try {
      RunConfig rc = config;
      rc.coordinator.optimizer = setting.optimizer;
      rc.coordinator.learning_rate = setting.learning_rate;
      rc.full_batch = setting.batch == 0 || setting.batch >= block.homes;
      if (setting.batch > 0) rc.coordinator.batch_size = std::min(setting.batch, block.homes);
      rc.coordinator.execution = {ExecPolicy::serial, 1};
      const CoordinatorConfig cc = coordinator_for(rc, block.seed, block.scenario.num_homes());
      const RunResult r = run_coordination(block.scenario, cc);
      row.status = r.stop == StopReason::time_budget ? "time_budget" : "ok";
      row.iterations = static_cast<int>(r.trace.size());
      row.z_initial = r.z_initial;
      row.z_final = r.final_z();
      row.wall_s = r.wall_ms / 1000.0;
      const fs::path cell_dir =
          fs::path(dir) / "cells" / ("n" + std::to_string(block.homes) + "_s" + std::to_string(block.seed) + "_" + row.setting);
      make_directory(cell_dir.string());
      write_file_atomic((cell_dir / "iterations.csv").string(), iterations_csv(r));
      write_file_atomic((cell_dir / "timings.csv").string(), timings_csv(r, 0.0));
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    // Commas would break the CSV row.
    std::replace(row.status.begin(), row.status.end(), ',', ';');
    std::replace(row.status.begin(), row.status.end(), '\n', ' ');
  });

  std::ostringstream runs;
  runs << kRunsHeader << '\n';
  int failures = 0, truncated = 0;
  for (const auto& r : rows) {
    runs << r.homes << ',' << r.seed << ',' << r.setting << ',' << r.status << ',' << r.iterations << ','
         << format_double(r.z_initial) << ',' << format_double(r.z_final) << ',' << format_double(r.wall_s) << '\n';
    if (r.status.rfind("failed", 0) == 0) ++failures;
    if (r.status == "time_budget") ++truncated;
  }
  write_file_atomic((fs::path(dir) / "runs.csv").string(), runs.str());

  std::vector<std::string> order;
  for (const auto& s : grid.settings) {
    if (std::find(order.begin(), order.end(), s.name()) == order.end()) order.push_back(s.name());
  }
  const auto summary = summarize_experiment(rows, order);
  std::ostringstream table;
  table << "setting,runs,failures,wins,mean_wall_s,average_rank\n";
  log << "setting                      runs fail wins  mean_wall_s  avg_rank\n";
  for (const auto& s : summary) {
    table << s.setting << ',' << s.runs << ',' << s.failures << ',' << s.wins << ',' << format_double(s.mean_wall_s)
          << ',' << format_double(s.average_rank) << '\n';
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %4d %4d %4d %12.3f %9.3f\n", s.setting.c_str(), s.runs, s.failures,
                  s.wins, s.mean_wall_s, s.average_rank);
    log << line;
  }
  write_file_atomic((fs::path(dir) / "summary.csv").string(), table.str());

  if (baseline) {
    std::ostringstream imp;
    imp << "homes,seed,setting,z_baseline,z_method,improvement_ratio\n";
    std::map<std::string, std::pair<double, int>> mean;
    for (const auto& r : rows) {
      if (r.status.rfind("failed", 0) == 0) continue;
      for (const auto& b : baseline_rows) {
        if (b.homes != r.homes || b.seed != r.seed) continue;
        const double ratio = improvement_ratio(b.z, r.z_final);
        imp << r.homes << ',' << r.seed << ',' << r.setting << ',' << format_double(b.z) << ','
            << format_double(r.z_final) << ',' << format_double(ratio) << '\n';
        mean[r.setting].first += ratio;
        ++mean[r.setting].second;
      }
    }
    write_file_atomic((fs::path(dir) / "improvement.csv").string(), imp.str());
    for (const auto& name : order) {
      const auto it = mean.find(name);
      if (it != mean.end()) log << "mean improvement ratio " << name << ": " << it->second.first / it->second.second << '\n';
    }
  }
  log << "results in " << dir << '\n';
  if (failures > 0) return exit_numerical;
  return truncated > 0 ? exit_time_budget : exit_ok;
}

int oracle_command(const RunConfig& config, std::ostream& log) {
  const std::string dir = resolve_output_dir(config, "oracle");
  make_directory(dir);
  const std::uint64_t seed = config.seeds.front();
  std::vector<CheckResult> checks{check_scalar_closed_form(), check_dense_active_set(100, seed),
                                  check_unbiased_estimator(seed), check_desk_scale_optimality(10)};
  std::ostringstream csv;
  csv << "check,pass,value,tolerance\n";
  bool all = true;
  for (const auto& c : checks) {
    log << format_check(c) << '\n';
    csv << c.name << ',' << (c.pass ? 1 : 0) << ',' << format_double(c.value) << ',' << format_double(c.tolerance) << '\n';
    all = all && c.pass;
  }
  write_file_atomic((fs::path(dir) / "oracle.csv").string(), csv.str());
  return all ? exit_ok : exit_numerical;
}

}  // namespace pricecoord
