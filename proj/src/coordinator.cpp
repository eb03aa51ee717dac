#include "pricecoord/coordinator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "pricecoord/errors.hpp"

namespace pricecoord {

void PriceBox::validate() const {
  if (!(std::isfinite(low) && std::isfinite(high) && low < high)) throw ConfigError("price box: need low < high");
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }
const char* to_string(GradientScaling scaling) { return scaling == GradientScaling::sum ? "sum" : "unbiased"; }

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::converged: return "converged";
    case StopReason::k_max: return "k_max";
    case StopReason::time_budget: return "time_budget";
  }
  return "unknown";
}

void CoordinatorConfig::validate(int n_homes) const {
  if (batch_size < 1 || batch_size > n_homes) {
    throw ConfigError("batch: need 1 <= B <= N (B=" + std::to_string(batch_size) + ", N=" + std::to_string(n_homes) + ")");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("lr: must be positive");
  if (k_max < 1) throw ConfigError("kmax: must be at least 1");
  if (!(epsilon > 0.0)) throw ConfigError("eps: must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
  if (!(time_budget > 0.0)) throw ConfigError("time-budget: must be positive");
  if (execution.workers < 0) throw ConfigError("workers: must be nonnegative");
}

Schedules schedules_of(const std::vector<PrimalDualSolution>& solutions) {
  Schedules out;
  out.reserve(solutions.size());
  for (const auto& s : solutions) out.push_back(s.p_star);
  return out;
}

Eigen::VectorXd aggregate_load(const Schedules& schedules, int horizon) {
  Eigen::VectorXd load = Eigen::VectorXd::Zero(horizon);
  for (const auto& p : schedules) {
    if (p.size() % horizon != 0) throw std::invalid_argument("schedule length is not a multiple of K");
    for (Eigen::Index j = 0; j < p.size() / horizon; ++j) load += p.segment(j * horizon, horizon);
  }
  return load;
}

namespace {

void check_schedules(const Scenario& scenario, const Schedules& schedules) {
  if (static_cast<int>(schedules.size()) != scenario.num_homes()) throw std::invalid_argument("one schedule per home expected");
  for (int i = 0; i < scenario.num_homes(); ++i) {
    if (schedules[i].size() != scenario.homes[i].polyhedron.num_variables()) {
      throw std::invalid_argument("schedule of home " + std::to_string(i) + " has the wrong length");
    }
  }
}

}  // namespace

double coordinator_objective(const Scenario& scenario, const Schedules& schedules) {
  check_schedules(scenario, schedules);
  const int K = scenario.horizon();
  double total = (scenario.target - aggregate_load(schedules, K)).squaredNorm();
  for (int i = 0; i < scenario.num_homes(); ++i) {
    const auto& home = scenario.homes[i];
    for (int j = 0; j < home.num_appliances(); ++j) {
      total += home.weights(j) * (schedules[i].segment(j * K, K) - home.desired.row(j).transpose()).squaredNorm();
    }
  }
  return total;
}

Schedules coordinator_partial_fp(const Scenario& scenario, const Schedules& schedules) {
  check_schedules(scenario, schedules);
  const int K = scenario.horizon();
  const Eigen::VectorXd shortfall = -2.0 * (scenario.target - aggregate_load(schedules, K));
  Schedules out(schedules.size());
  for (int i = 0; i < scenario.num_homes(); ++i) {
    const auto& home = scenario.homes[i];
    out[i].resize(schedules[i].size());
    for (int j = 0; j < home.num_appliances(); ++j) {
      out[i].segment(j * K, K) =
          shortfall + 2.0 * home.weights(j) * (schedules[i].segment(j * K, K) - home.desired.row(j).transpose());
    }
  }
  return out;
}

std::vector<int> sample_batch(int n_homes, int batch_size, Rng& rng) {
  if (batch_size < 1 || batch_size > n_homes) throw std::invalid_argument("sample_batch: need 1 <= B <= N");
  // Partial Fisher-Yates.
  std::vector<int> pool(n_homes);
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < batch_size; ++k) {
    const auto pick = static_cast<int>(rng.integer(k, n_homes - 1));
    std::swap(pool[k], pool[pick]);
  }
  std::vector<int> batch(pool.begin(), pool.begin() + batch_size);
  std::sort(batch.begin(), batch.end());
  return batch;
}

Eigen::VectorXd estimate_gradient(const std::vector<Eigen::VectorXd>& contributions, int n_homes, int batch_size,
                                  GradientScaling scaling) {
  if (contributions.empty()) throw std::invalid_argument("estimate_gradient: empty batch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(contributions.front().size());
  for (const auto& c : contributions) g += c;
  if (scaling == GradientScaling::unbiased) g *= static_cast<double>(n_homes) / batch_size;
  return g;
}

PriceVector adam_step(OptimizerState& state, const Eigen::VectorXd& gradient, const PriceVector& price,
                      const CoordinatorConfig& config) {
  if (state.first_moment.size() != gradient.size()) {
    state.first_moment = Eigen::VectorXd::Zero(gradient.size());
    state.second_moment = Eigen::VectorXd::Zero(gradient.size());
  }
  ++state.step;
  state.first_moment = config.beta1 * state.first_moment + (1.0 - config.beta1) * gradient;
  state.second_moment = config.beta2 * state.second_moment + (1.0 - config.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, state.step);
  const double c2 = 1.0 - std::pow(config.beta2, state.step);
  const Eigen::ArrayXd m_hat = state.first_moment.array() / c1;
  const Eigen::ArrayXd v_hat = state.second_moment.array() / c2;
  return price.array() - config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
}

PriceVector scaled_sgd_step(OptimizerState& state, const Eigen::VectorXd& gradient, const PriceVector& price,
                            double learning_rate) {
  ++state.step;
  return price - (learning_rate / std::sqrt(static_cast<double>(state.step))) * gradient;
}

PriceVector project_price(const PriceVector& proposal, const PriceBox& box) {
  return proposal.cwiseMax(box.low).cwiseMin(box.high);
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

RunResult run_coordination(const Scenario& scenario, const CoordinatorConfig& config, const IterationObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  const int N = scenario.num_homes();
  const int K = scenario.horizon();
  config.validate(N);
  const PriceBox box{scenario.config.price_low, scenario.config.price_high};
  box.validate();

  Rng rng(config.seed);
  RunResult result;
  result.initial_price.resize(K);
  for (int t = 0; t < K; ++t) result.initial_price(t) = rng.uniform(box.low, box.high);
  PriceVector price = result.initial_price;

  auto solvers = make_home_solvers(scenario);
  std::vector<PrimalDualSolution> solutions;
  try {
    solutions = solve_all(solvers, price, nullptr, config.execution);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("initial solve: ") + e.what());
  }
  result.z_initial = coordinator_objective(scenario, schedules_of(solutions));

  OptimizerState state;
  double z_prev = std::numeric_limits<double>::infinity();
  result.stop = StopReason::k_max;
  for (int k = 1; k <= config.k_max; ++k) {
    const auto iteration_start = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.k = k;
    try {
      rec.batch = sample_batch(N, config.batch_size, rng);
      const Schedules current = schedules_of(solutions);
      const Schedules partials = coordinator_partial_fp(scenario, current);
      auto batch = batch_contributions(scenario, solutions, partials, rec.batch, config.execution);
      rec.skipped = std::move(batch.skipped);
      rec.degenerate = std::move(batch.degenerate);
      const Eigen::VectorXd g = estimate_gradient(batch.contributions, N, config.batch_size, config.scaling);
      rec.grad_norm = g.norm();
      if (!g.allFinite()) throw NumericalError("gradient estimate is not finite");

      const PriceVector proposal = config.optimizer == OptimizerKind::adam
                                       ? adam_step(state, g, price, config)
                                       : scaled_sgd_step(state, g, price, config.learning_rate);
      price = project_price(proposal, box);
      solutions = solve_all(solvers, price, &solutions, config.execution);
      rec.z = coordinator_objective(scenario, schedules_of(solutions));
    } catch (const std::exception& e) {
      throw NumericalError("iteration " + std::to_string(k) + ": " + e.what());
    }
    rec.wall_ms = elapsed_ms(iteration_start);
    result.trace.push_back(rec);
    if (observer) observer(result.trace.back());

    double ratio;
    if (std::isinf(z_prev)) {
      ratio = std::numeric_limits<double>::infinity();
    } else if (z_prev == 0.0) {
      ratio = rec.z == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      ratio = std::abs(rec.z - z_prev) / z_prev;
    }
    z_prev = rec.z;
    if (ratio <= config.epsilon) {
      result.stop = StopReason::converged;
      break;
    }
    if (elapsed_ms(start) > 1000.0 * config.time_budget && k < config.k_max) {
      result.stop = StopReason::time_budget;
      break;
    }
  }
  result.final_price = price;
  result.final_solutions = std::move(solutions);
  result.wall_ms = elapsed_ms(start);
  return result;
}

double evaluate_price(const Scenario& scenario, const PriceVector& price, const Execution& exec) {
  auto solvers = make_home_solvers(scenario);
  return coordinator_objective(scenario, schedules_of(solve_all(solvers, price, nullptr, exec)));
}

}  // namespace pricecoord
