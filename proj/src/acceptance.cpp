#include "pricecoord/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "pricecoord/errors.hpp"
#include "pricecoord/harness.hpp"
#include "pricecoord/oracle.hpp"

namespace fs = std::filesystem;

namespace pricecoord {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, format, value);
  return buffer;
}

PriceVector random_price(const Scenario& scenario, std::uint64_t seed) {
  Rng rng(seed);
  PriceVector price(scenario.horizon());
  for (int t = 0; t < scenario.horizon(); ++t) price(t) = rng.uniform(scenario.config.price_low, scenario.config.price_high);
  return price;
}

Scenario generated(int homes, int horizon, std::uint64_t seed) {
  NeighborhoodConfig config;
  config.n_homes = homes;
  config.horizon = horizon;
  config.seed = seed;
  return generate_neighborhood(config);
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Largest violation of one appliance's physical limits under `p`.
double simulated_violation(const ApplianceSpec& spec, const Eigen::VectorXd& p, const Eigen::VectorXd& outside) {
  const int K = static_cast<int>(p.size());
  double worst = -p.minCoeff();
  if (const auto* h = std::get_if<HvacSpec>(&spec)) {
    const Eigen::VectorXd T = hvac_temperature_trajectory(*h, p, outside);
    worst = std::max({worst, p.maxCoeff() - h->nominal_power, h->t_low - T.minCoeff(), T.maxCoeff() - h->t_upper});
  } else if (const auto* e = std::get_if<EwhSpec>(&spec)) {
    const Eigen::VectorXd x = ewh_level_trajectory(*e, p);
    worst = std::max(worst, p.maxCoeff() - e->max_power);
    for (int t = 1; t <= K; ++t) {
      worst = std::max({worst, -x(t), x(t) - e->capacity});
      if (t < K) worst = std::max(worst, e->demand[t] - x(t));
    }
  } else if (const auto* v = std::get_if<EvSpec>(&spec)) {
    const Eigen::VectorXd x = ev_charge_trajectory(*v, p);
    worst = std::max(worst, p.maxCoeff() - v->max_power);
    for (int t = 1; t <= K; ++t) {
      worst = std::max({worst, -x(t), x(t) - v->capacity});
      if (t < K) worst = std::max(worst, v->demand[t] - x(t));
    }
    for (int t = 0; t < K; ++t) {
      if (v->in_use(t)) worst = std::max(worst, p(t));
    }
  } else if (const auto* b = std::get_if<BasicApplianceSpec>(&spec)) {
    double energy = 0.0;
    for (int t = 0; t < K; ++t) {
      if (b->in_window(t)) {
        energy += p(t);
        worst = std::max(worst, p(t) - b->max_power);
      } else {
        worst = std::max(worst, std::abs(p(t)));
      }
    }
    worst = std::max(worst, std::abs(energy - b->total_energy));
  }
  return worst;
}

}  // namespace

std::string format_check(const CheckResult& c) {
  std::ostringstream out;
  out << (c.pass ? "[PASS] " : "[FAIL] ") << c.id << " " << c.name << ": " << c.detail << " ("
      << fmt("%.3g", c.value) << (c.pass ? " <= " : " vs ") << fmt("%.3g", c.tolerance) << ", "
      << fmt("%.1f", c.seconds) << " s)";
  return out.str();
}

CheckResult check_gradient_fidelity(int scenarios, std::uint64_t seed) {
  const auto start = Clock::now();
  CheckResult c{"1", "gradient fidelity", false, 0.0, 1e-4, "", 0.0};
  int excluded = 0, evaluated = 0;
  std::string failure;
  for (int s = 0; s < scenarios; ++s) {
    try {
      const Scenario scenario = generated(3, 8, derive_seed(seed, 100 + s));
      const PriceVector price = random_price(scenario, derive_seed(seed, 200 + s));
      const auto r = gradcheck(scenario, price, GradcheckOptions{});
      if (!r.degenerate_homes.empty()) {
        ++excluded;
        continue;
      }
      ++evaluated;
      c.value = std::max(c.value, r.max_relative_error);
    } catch (const SingularSystemError&) {
      ++excluded;
    } catch (const std::exception& e) {
      failure = e.what();
      break;
    }
  }
  c.seconds = seconds_since(start);
  const double limit_s = 120.0;
  c.pass = failure.empty() && evaluated > 0 && c.value <= c.tolerance && c.seconds <= limit_s;
  c.detail = "max relative error over " + std::to_string(evaluated) + " scenarios, " + std::to_string(excluded) +
             " excluded as degenerate, runtime limit 120 s";
  if (!failure.empty()) c.detail += "; error: " + failure;
  return c;
}

CheckResult check_unbiased_estimator(std::uint64_t seed) {
  const auto start = Clock::now();
  CheckResult c{"2", "unbiased batch estimator", false, 0.0, 1e-10, "", 0.0};
  const Scenario scenario = generated(4, 96, derive_seed(seed, 300));
  const PriceVector price = random_price(scenario, derive_seed(seed, 301));
  const auto e = enumerate_batch_estimator(scenario, price, 2, GradientScaling::unbiased);
  const double scale = std::max(1.0, e.full_gradient.cwiseAbs().maxCoeff());
  c.value = (e.mean - e.full_gradient).cwiseAbs().maxCoeff() / scale;
  c.pass = c.value <= c.tolerance;
  c.detail = "N=4 B=2, " + std::to_string(e.batches) + " batches, max |mean - full| / max(1, |full|)";
  c.seconds = seconds_since(start);
  return c;
}

CheckResult check_scalar_closed_form() {
  const auto start = Clock::now();
  CheckResult c{"3a", "scalar closed form", false, 0.0, 1e-6, "", 0.0};
  struct Case {
    double w, desired, price, lo, hi;
  };
  // interior, clipped low, clipped high, unconstrained optimum on a bound, pinned
  const Case cases[] = {{1.0, 1.0, 0.2, 0.0, 2.0},
                        {1.0, 1.0, 4.0, 0.0, 2.0},
                        {2.0, 3.0, 0.4, 0.0, 2.0},
                        {1.0, 1.25, 0.5, 0.0, 1.0},
                        {1.0, 1.0, 0.5, 0.7, 0.7}};
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Case> all(std::begin(cases), std::end(cases));
  for (int k = 0; k < 200; ++k) {
    const double lo = u(gen);
    all.push_back({0.2 + 2.0 * u(gen), 3.0 * u(gen), u(gen), lo, lo + 2.0 * u(gen)});
  }
  for (const auto& k : all) {
    const auto exact = scalar_qp_closed_form(k.w, k.desired, k.price, k.lo, k.hi);
    BlockBuilder b("scalar", 1);
    b.add_upper(0, k.hi, "upper");
    b.add_lower(0, k.lo, "lower");
    const auto poly = assemble_home_polyhedron({b.build()});
    const auto s = solve_home_qp(poly, Eigen::VectorXd::Constant(1, k.w), Eigen::MatrixXd::Constant(1, 1, k.desired),
                                 Eigen::VectorXd::Constant(1, k.price));
    double err = std::abs(s.p_star(0) - exact.p);
    // a pinned variable splits its multiplier between the two rows
    if (k.lo < k.hi) {
      err = std::max({err, std::abs(s.lambda_star(0) - exact.lambda_high), std::abs(s.lambda_star(1) - exact.lambda_low)});
    }
    c.value = std::max(c.value, err);
  }
  c.pass = c.value <= c.tolerance;
  c.detail = std::to_string(all.size()) + " cases, max error in p* and multipliers";
  c.seconds = seconds_since(start);
  return c;
}

CheckResult check_dense_active_set(int instances, std::uint64_t seed) {
  const auto start = Clock::now();
  CheckResult c{"3b", "dense active-set agreement", false, 0.0, 1e-6, "", 0.0};
  std::mt19937_64 gen(derive_seed(seed, 400));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int not_found = 0;
  for (int trial = 0; trial < instances; ++trial) {
    const int M = 1 + static_cast<int>(2 * u(gen));
    const int K = M == 1 ? 1 + static_cast<int>(5 * u(gen)) : 1 + static_cast<int>(3 * u(gen));
    std::vector<ConstraintBlock> blocks;
    Eigen::MatrixXd desired(M, K);
    Eigen::VectorXd weights(M);
    for (int j = 0; j < M; ++j) {
      BlockBuilder b("random" + std::to_string(j), K);
      Eigen::VectorXd anchor(K);
      for (int t = 0; t < K; ++t) {
        const double hi = 1.0 + 2.0 * u(gen);
        b.add_upper(t, hi, "upper[" + std::to_string(t) + "]");
        b.add_lower(t, 0.0, "lower[" + std::to_string(t) + "]");
        anchor(t) = hi * u(gen);
        desired(j, t) = 3.0 * u(gen);
      }
      // two general rows through a point inside the box
      for (int r = 0; r < 2; ++r) {
        Eigen::VectorXd g(K);
        for (int t = 0; t < K; ++t) g(t) = 2.0 * u(gen) - 1.0;
        b.add(g, g.dot(anchor) + 0.5 * u(gen), "general" + std::to_string(r));
      }
      blocks.push_back(b.build());
      weights(j) = 0.3 + u(gen);
    }
    const auto poly = assemble_home_polyhedron(std::move(blocks));
    PriceVector price(K);
    for (int t = 0; t < K; ++t) price(t) = u(gen);
    const Eigen::VectorXd w = per_variable_weights(weights, K);
    Eigen::VectorXd linear(M * K);
    for (int j = 0; j < M; ++j) {
      linear.segment(j * K, K) = price - 2.0 * weights(j) * desired.row(j).transpose();
    }
    const auto dense = enumerate_kkt_qp(2.0 * w, linear, poly.dense_matrix(), poly.rhs());
    if (!dense.found) {
      ++not_found;
      continue;
    }
    const auto s = solve_home_qp(poly, weights, desired, price);
    c.value = std::max(c.value, (s.p_star - dense.x).cwiseAbs().maxCoeff());
  }
  c.pass = not_found == 0 && c.value <= c.tolerance;
  c.detail = std::to_string(instances) + " instances, max |p* - p_enum|, " + std::to_string(not_found) + " unresolved";
  c.seconds = seconds_since(start);
  return c;
}

CheckResult check_scenario_kkt(std::uint64_t seed) {
  const auto start = Clock::now();
  CheckResult c{"3c", "scenario KKT residuals", false, 0.0, 1e-8, "", 0.0};
  const Scenario scenario = generated(100, 96, seed);
  const PriceVector price = random_price(scenario, coordinator_seed(seed));
  auto solvers = make_home_solvers(scenario);
  const auto solutions = solve_all(solvers, price);
  for (int i = 0; i < scenario.num_homes(); ++i) {
    const auto& h = scenario.homes[i];
    c.value = std::max(c.value, kkt_residuals(solutions[i], h.polyhedron, h.weights, h.desired, price).worst());
  }
  c.pass = c.value <= c.tolerance;
  c.detail = "worst residual over " + std::to_string(scenario.num_homes()) + " homes";
  c.seconds = seconds_since(start);
  return c;
}

CheckResult check_hvac_closed_form(int cases, std::uint64_t seed) {
  const auto start = Clock::now();
  CheckResult c{"4a", "HVAC closed form vs recursion", false, 0.0, 1e-9, "", 0.0};
  std::mt19937_64 gen(derive_seed(seed, 500));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < cases; ++trial) {
    HvacSpec s;
    s.gamma1 = 0.01 + 0.99 * u(gen);
    s.gamma2 = 0.1 + u(gen);
    s.t_low = 15.0 + 5.0 * u(gen);
    s.t_upper = s.t_low + 1.0 + 6.0 * u(gen);
    s.t_init = s.t_low + (s.t_upper - s.t_low) * u(gen);
    s.mode = u(gen) < 0.5 ? HvacMode::heating : HvacMode::cooling;
    const int K = 1 + static_cast<int>(96 * u(gen));
    Eigen::VectorXd out(K), p(K);
    for (int t = 0; t < K; ++t) {
      out(t) = -5.0 + 40.0 * u(gen);
      p(t) = s.nominal_power * u(gen);
    }
    const auto form = hvac_closed_form(s, out);
    const Eigen::VectorXd diff = form.power_coefficients * p + form.constant - hvac_temperature_trajectory(s, p, out);
    c.value = std::max(c.value, diff.cwiseAbs().maxCoeff());
  }
  c.pass = c.value <= c.tolerance;
  c.detail = std::to_string(cases) + " random cases, max temperature difference";
  c.seconds = seconds_since(start);
  return c;
}

CheckResult check_schedule_simulation(std::uint64_t seed) {
  const auto start = Clock::now();
  CheckResult c{"4b", "simulated schedules", false, 0.0, 1e-7, "", 0.0};
  const Scenario scenario = generated(100, 96, seed);
  const PriceVector price = random_price(scenario, coordinator_seed(seed));
  auto solvers = make_home_solvers(scenario);
  const auto solutions = solve_all(solvers, price);
  const int K = scenario.horizon();
  int schedules = 0;
  for (int i = 0; i < scenario.num_homes(); ++i) {
    const auto& h = scenario.homes[i];
    for (int j = 0; j < h.num_appliances(); ++j) {
      const Eigen::VectorXd p = solutions[i].p_star.segment(j * K, K);
      c.value = std::max(c.value, simulated_violation(h.appliances[j], p, scenario.outside_temp));
      ++schedules;
    }
  }
  c.pass = c.value <= c.tolerance;
  c.detail = std::to_string(schedules) + " appliance schedules, worst limit violation";
  c.seconds = seconds_since(start);
  return c;
}

CheckResult check_desk_scale_optimality(int seeds) {
  const auto start = Clock::now();
  CheckResult c{"5", "desk-scale optimality", false, -std::numeric_limits<double>::infinity(), 0.02, "", 0.0};
  const Scenario toy = desk_toy_scenario();
  const auto best = brute_force_price_search(toy, 0.01);
  CoordinatorConfig config;
  config.batch_size = 1;
  config.learning_rate = 0.02;
  config.k_max = 200;
  config.epsilon = 1e-6;
  config.execution = {ExecPolicy::serial, 1};
  double worst_z = 0.0;
  for (int s = 0; s < seeds; ++s) {
    config.seed = coordinator_seed(static_cast<std::uint64_t>(s));
    const auto r = run_coordination(toy, config);
    worst_z = std::max(worst_z, r.final_z());
    c.value = std::max(c.value, (r.final_z() - best.z) / best.z);
  }
  c.seconds = seconds_since(start);
  c.pass = c.value <= c.tolerance && c.seconds <= 60.0;
  c.detail = "N=1 K=2 toy, grid optimum " + fmt("%.6g", best.z) + " at (" + fmt("%.2f", best.price(0)) + ", " +
             fmt("%.2f", best.price(1)) + "), worst final z " + fmt("%.6g", worst_z) + " over " +
             std::to_string(seeds) + " seeds (Adam lr 0.02, k_max 200, eps 1e-6), worst relative gap";
  return c;
}

CheckResult check_load_shaping(int seeds) {
  const auto start = Clock::now();
  CheckResult c{"6", "load shaping", false, 0.0, 0.5, "", 0.0};
  double worst_rms = 0.0, worst_z = 0.0;
  RunConfig rc;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const Scenario scenario = make_scenario(rc, seed);
    const auto r = run_coordination(scenario, coordinator_for(rc, seed, scenario.num_homes()));
    Schedules desired;
    for (const auto& h : scenario.homes) desired.push_back(stack_rows(h.desired));
    const int K = scenario.horizon();
    const double rms_desired = (aggregate_load(desired, K) - scenario.target).norm();
    const double rms_optimal = (aggregate_load(schedules_of(r.final_solutions), K) - scenario.target).norm();
    worst_rms = std::max(worst_rms, rms_optimal / rms_desired);
    worst_z = std::max(worst_z, r.final_z() / r.z_initial);
  }
  c.value = std::max(worst_rms, worst_z);
  c.pass = worst_rms <= 0.5 && worst_z <= 0.5;
  c.detail = std::to_string(seeds) + " default 100-home runs, worst RMS ratio " + fmt("%.3f", worst_rms) +
             ", worst z_final/z_initial " + fmt("%.3f", worst_z);
  c.seconds = seconds_since(start);
  return c;
}

CheckResult check_runtime_envelope(double budget_s) {
  const auto start = Clock::now();
  CheckResult c{"7", "runtime envelope", false, 0.0, budget_s, "", 0.0};
  RunConfig rc;
  rc.coordinator.epsilon = 1e-300;  // force all k_max iterations
  rc.coordinator.time_budget = budget_s;
  const Scenario scenario = make_scenario(rc, 0);
  const auto r = run_coordination(scenario, coordinator_for(rc, 0, scenario.num_homes()));
  c.seconds = seconds_since(start);
  c.value = c.seconds;
  c.pass = static_cast<int>(r.trace.size()) == 50 && c.seconds <= budget_s;
  c.detail = "100 homes, K=96, B=25, Adam, " + std::to_string(r.trace.size()) + " iterations, coordination " +
             fmt("%.1f", r.wall_ms / 1000.0) + " s, wall seconds including generation";
  return c;
}

CheckResult check_determinism(const std::string& scratch_dir) {
  const auto start = Clock::now();
  CheckResult c{"8", "determinism", false, 0.0, 0.0, "", 0.0};
  const char* files[] = {"iterations.csv", "prices.csv", "loads.csv", "aggregate.csv"};
  const std::pair<const char*, int> runs[] = {{"a", 1}, {"b", 1}, {"c", 4}, {"d", 2}};
  std::ostringstream sink;
  for (const auto& [name, workers] : runs) {
    RunConfig rc;
    rc.coordinator.k_max = 10;
    rc.coordinator.execution.workers = workers;
    rc.seeds = {3};
    rc.out = (fs::path(scratch_dir) / name).string();
    run_command(rc, sink);
  }
  int differing = 0;
  for (const char* f : files) {
    const std::string ref = read_bytes(fs::path(scratch_dir) / "a" / f);
    if (ref.empty()) ++differing;
    for (const auto& [name, workers] : runs) {
      if (read_bytes(fs::path(scratch_dir) / name / f) != ref) ++differing;
    }
  }
  c.value = differing;
  c.pass = differing == 0;
  c.detail = "4 CSVs over 4 runs (workers 1, 1, 4, 2), differing files";
  c.seconds = seconds_since(start);
  return c;
}

}  // namespace pricecoord
