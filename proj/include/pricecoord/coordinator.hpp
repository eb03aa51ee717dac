#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pricecoord/home_agent.hpp"
#include "pricecoord/kernels.hpp"
#include "pricecoord/random.hpp"
#include "pricecoord/scenario.hpp"

namespace pricecoord {

struct PriceBox {
  double low = 0.1;
  double high = 1.0;

  void validate() const;
};

enum class OptimizerKind { adam, scaled_sgd };
enum class GradientScaling { sum, unbiased };
enum class StopReason { converged, k_max, time_budget };

const char* to_string(OptimizerKind kind);
const char* to_string(GradientScaling scaling);
const char* to_string(StopReason reason);

struct CoordinatorConfig {
  int batch_size = 25;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.1;
  int k_max = 50;
  double epsilon = 1e-3;
  std::uint64_t seed = 0;
  GradientScaling scaling = GradientScaling::unbiased;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Wall-clock limit in seconds, checked after every iteration.
  double time_budget = std::numeric_limits<double>::infinity();
  Execution execution;

  /// Throws ConfigError. `n_homes` bounds the batch size.
  void validate(int n_homes) const;
};

struct OptimizerState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  int step = 0;
};

/// Stacked schedules, one vector per home.
using Schedules = std::vector<Eigen::VectorXd>;

Schedules schedules_of(const std::vector<PrimalDualSolution>& solutions);

/// sum_i sum_j p_ij(t)
Eigen::VectorXd aggregate_load(const Schedules& schedules, int horizon);

/// sum_t (Q(t) - L(t))^2 + sum_ijt c_ij (p_ij(t) - p̄_ij(t))^2
double coordinator_objective(const Scenario& scenario, const Schedules& schedules);

/// df/dp_ij(t) = -2 (Q(t) - L(t)) + 2 c_ij (p_ij(t) - p̄_ij(t)), per home.
Schedules coordinator_partial_fp(const Scenario& scenario, const Schedules& schedules);

/// B distinct homes, uniform without replacement, in ascending order.
std::vector<int> sample_batch(int n_homes, int batch_size, Rng& rng);

/// sum: plain batch sum. unbiased: (N / B) times the batch sum.
Eigen::VectorXd estimate_gradient(const std::vector<Eigen::VectorXd>& contributions, int n_homes, int batch_size,
                                  GradientScaling scaling);

PriceVector adam_step(OptimizerState& state, const Eigen::VectorXd& gradient, const PriceVector& price,
                      const CoordinatorConfig& config);

/// pi - (alpha / sqrt(k)) g with k the step count after increment.
PriceVector scaled_sgd_step(OptimizerState& state, const Eigen::VectorXd& gradient, const PriceVector& price,
                            double learning_rate);

PriceVector project_price(const PriceVector& proposal, const PriceBox& box);

struct IterationRecord {
  int k = 0;
  double z = 0.0;
  double grad_norm = 0.0;
  std::vector<int> batch;
  std::vector<int> skipped;
  std::vector<int> degenerate;
  double wall_ms = 0.0;
};

struct RunResult {
  PriceVector initial_price;
  PriceVector final_price;
  double z_initial = 0.0;  // objective at the random initial price
  std::vector<IterationRecord> trace;
  StopReason stop = StopReason::k_max;
  std::vector<PrimalDualSolution> final_solutions;
  double wall_ms = 0.0;

  double final_z() const { return trace.empty() ? z_initial : trace.back().z; }
};

/// Called after every iteration; used for logging.
using IterationObserver = std::function<void(const IterationRecord&)>;

/// The distributed price-coordination loop. Per iteration: draw a batch,
/// differentiate the batch homes' KKT systems at their current optimum, step
/// the optimizer, project onto the price box, re-solve every home at the new
/// price and evaluate z. Stops when |z_k - z_{k-1}| / z_{k-1} <= epsilon
/// with z_0 = infinity, at k_max, or when the time budget runs out.
///
/// Errors are rethrown as NumericalError carrying the iteration index.
RunResult run_coordination(const Scenario& scenario, const CoordinatorConfig& config,
                           const IterationObserver& observer = {});

/// Objective of all homes' best responses to a fixed price (cold solves).
double evaluate_price(const Scenario& scenario, const PriceVector& price, const Execution& exec = {});

}  // namespace pricecoord
