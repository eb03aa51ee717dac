#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pricecoord/errors.hpp"
#include "pricecoord/harness.hpp"
#include "support.hpp"

using namespace pricecoord;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pricecoord-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

RunConfig small_run(const fs::path& out) {
  RunConfig c;
  c.generation.n_homes = 5;
  c.generation.horizon = 12;
  c.coordinator.batch_size = 2;
  c.coordinator.k_max = 4;
  c.experiment.settings = ExperimentGrid::default_settings();
  c.out = out.string();
  return c;
}

}  // namespace

TEST_CASE("minimal config fills defaults") {
  const auto c = parse_config("{}", "inline");
  CHECK(c.generation.horizon == 96);
  CHECK(c.generation.price_low == 0.1);
  CHECK(c.generation.price_high == 1.0);
  CHECK(c.coordinator.k_max == 50);
  CHECK(c.coordinator.epsilon == 1e-3);
  CHECK(c.experiment.settings.size() == 8);
  CHECK(c.experiment.homes == std::vector<int>{50, 100, 250});
}

TEST_CASE("config parsing") {
  const auto c = parse_config(R"({"neighborhood": {"homes": 10, "horizon": 24},
                                  "coordinator": {"batch": "full", "optimizer": "sgd", "lr": 1e-5, "scaling": "sum"},
                                  "seeds": [3, 4], "experiment": {"seeds": 2, "settings": [{"optimizer": "adam", "lr": 1.0, "batch": 5}]}})",
                              "inline");
  CHECK(c.generation.n_homes == 10);
  CHECK(c.full_batch);
  CHECK(c.coordinator.optimizer == OptimizerKind::scaled_sgd);
  CHECK(c.coordinator.scaling == GradientScaling::sum);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.experiment.seeds == std::vector<std::uint64_t>{0, 1});
  REQUIRE(c.experiment.settings.size() == 1);
  CHECK(c.experiment.settings[0].name() == "adam_lr1_B5");
  CHECK(coordinator_for(c, 3, 10).batch_size == 10);

  try {
    parse_config(R"({"coordinator": {"learning_rate": 0.1}})", "inline");
    FAIL("accepted an unknown key");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
  try {
    parse_config(R"({"neighborhood": {"homes": 4}, "coordinator": {"batch": 5}})", "inline");
    FAIL("accepted B > N");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("coordinator.batch") != std::string::npos);
  }
  {
    const auto small = parse_config(R"({"neighborhood": {"homes": 4}})", "inline");
    CHECK(coordinator_for(small, 0, 4).batch_size == 4);
  }
  try {
    parse_config("{\n  \"seeds\": [1,\n  }", "cfg.json");
    FAIL("accepted malformed JSON");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("cfg.json:3:", 0) == 0);
  }
  CHECK_THROWS_AS(parse_config(R"({"coordinator": {"k_max": "many"}})", "inline"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"neighborhood": {}, "scenario_file": "x.json"})", "inline"), ConfigError);
}

TEST_CASE("output directory resolution") {
  RunConfig c;
  c.out = "explicit";
  CHECK(resolve_output_dir(c, "run") == "explicit");
  c.out.clear();
  setenv(kOutputRootEnv, "/tmp/root", 1);
  CHECK(resolve_output_dir(c, "run") == "/tmp/root/run");
  unsetenv(kOutputRootEnv);
  CHECK(resolve_output_dir(c, "oracle") == "pricecoord-out/oracle");
}

TEST_CASE("floats round-trip") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456.789}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("run writes the artifacts deterministically") {
  const auto dir = scratch("run");
  auto c = small_run(dir / "a");
  std::ostringstream log;
  CHECK(run_command(c, log) == exit_ok);
  const std::string aggregate = slurp(dir / "a" / "aggregate.csv");
  CHECK(count_lines(aggregate) == 1 + 12);
  CHECK(aggregate.rfind("t,Q,desired_aggregate,optimal_aggregate\n", 0) == 0);
  CHECK(count_lines(slurp(dir / "a" / "prices.csv")) == 1 + 12);
  const std::string iterations = slurp(dir / "a" / "iterations.csv");
  CHECK(iterations.rfind("k,z,grad_norm,skipped_homes,degenerate_homes\n", 0) == 0);
  CHECK(count_lines(iterations) >= 2);
  const Scenario s = make_scenario(c, 0);
  int variables = 0;
  for (const auto& h : s.homes) variables += h.polyhedron.num_variables();
  CHECK(count_lines(slurp(dir / "a" / "loads.csv")) == 1 + variables);
  CHECK(fs::exists(dir / "a" / "summary.json"));
  CHECK(fs::exists(dir / "a" / "timings.csv"));

  c.out = (dir / "b").string();
  c.coordinator.execution.workers = 3;
  CHECK(run_command(c, log) == exit_ok);
  for (const char* f : {"iterations.csv", "prices.csv", "loads.csv", "aggregate.csv"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  fs::remove_all(dir);
}

TEST_CASE("time budget truncates the run") {
  const auto dir = scratch("budget");
  auto c = small_run(dir);
  c.coordinator.k_max = 50;
  c.coordinator.epsilon = 1e-300;
  c.coordinator.time_budget = 1e-9;
  std::ostringstream log;
  CHECK(run_command(c, log) == exit_time_budget);
  CHECK(count_lines(slurp(dir / "iterations.csv")) == 2);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck passes and catches a corrupted sign") {
  RunConfig c;
  c.generation.n_homes = 3;
  c.generation.horizon = 8;
  const Scenario s = make_scenario(c, 2);
  PriceVector price = Eigen::VectorXd::Constant(8, 0.4);
  const auto ok = gradcheck(s, price, {});
  CHECK(ok.pass);
  GradcheckOptions bad;
  bad.corrupt_sign = true;
  const auto wrong = gradcheck(s, price, bad);
  CHECK_FALSE(wrong.pass);
  Eigen::Index worst = 0;
  ok.finite_difference.cwiseAbs().maxCoeff(&worst);
  CHECK(wrong.worst_slot == static_cast<int>(worst));

  // clipped regime: both gradients vanish
  const auto clipped = pricecoord::testing::box_scenario({Eigen::MatrixXd::Constant(1, 4, 5.0)}, {Eigen::VectorXd::Ones(1)},
                                                         Eigen::VectorXd::Constant(4, 2.0), 0.0, 1.0);
  const auto flat = gradcheck(clipped, Eigen::VectorXd::Constant(4, 0.5), {});
  CHECK(flat.pass);
  CHECK(flat.implicit.norm() == 0.0);

  c.generation.n_homes = 11;
  c.out = scratch("gradcheck").string();
  std::ostringstream log;
  CHECK_THROWS_AS(gradcheck_command(c, {}, log), ConfigError);
}

TEST_CASE("experiment summaries") {
  std::vector<ExperimentRow> rows{
      {10, 0, "a", "ok", 5, 10.0, 1.0, 0.5}, {10, 0, "b", "ok", 5, 10.0, 2.0, 1.5},
      {10, 1, "a", "ok", 5, 10.0, 3.0, 1.0}, {10, 1, "b", "ok", 5, 10.0, 3.0, 0.5},
      {10, 2, "a", "failed: x", 0, 0.0, 0.0, 0.0}, {10, 2, "b", "ok", 5, 10.0, 9.0, 1.0},
  };
  const auto s = summarize_experiment(rows, {"a", "b"});
  REQUIRE(s.size() == 2);
  CHECK(s[0].wins == 2);
  CHECK(s[1].wins == 2);
  CHECK(s[0].failures == 1);
  CHECK(s[0].average_rank == doctest::Approx(1.25));
  CHECK(s[1].average_rank == doctest::Approx((2.0 + 1.5 + 1.0) / 3.0));
  CHECK(s[0].mean_wall_s == doctest::Approx(0.75));
  CHECK(improvement_ratio(4.0, 4.0) == 0.0);
  CHECK(improvement_ratio(31.0, 1.0) == 30.0);
}

TEST_CASE("experiment grid runs every cell") {
  const auto dir = scratch("experiment");
  RunConfig c = small_run(dir);
  c.experiment.homes = {4};
  c.experiment.seeds = {0, 1};
  c.experiment.settings = {{OptimizerKind::adam, 0.1, 2}, {OptimizerKind::adam, 0.1, 2}};
  fs::create_directories(dir);
  {
    std::ofstream b(dir / "baseline.csv");
    b << "homes,seed,z\n4,0,1.5\n";
  }
  std::ostringstream log;
  CHECK(experiment_command(c, (dir / "baseline.csv").string(), log) == exit_ok);
  const auto rows = read_runs_csv((dir / "runs.csv").string());
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].z_final == rows[1].z_final);
  const auto summary = summarize_experiment(rows, {"adam_lr0.1_B2"});
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].runs == 4);
  CHECK(summary[0].average_rank == doctest::Approx(1.5));
  CHECK(count_lines(slurp(dir / "summary.csv")) == 2);
  CHECK(count_lines(slurp(dir / "improvement.csv")) == 3);
  fs::remove_all(dir);
}
