#pragma once

#include <vector>

#include <Eigen/Dense>

#include "pricecoord/coordinator.hpp"
#include "pricecoord/scenario.hpp"

namespace pricecoord {

// Independent checks for the main pipeline. Each oracle uses only the pieces
// it does not verify: the finite-difference gradient needs home solves and
// the coordinator objective, the closed forms need nothing.

struct FdConfig {
  double step = 1e-5;
};

/// Central differences of the full pipeline z(pi): every home is cold-solved
/// at pi +/- h e_t. Homes accept prices slightly outside the box, so no step
/// shrinking is done at the boundary.
Eigen::VectorXd finite_difference_gradient(const Scenario& scenario, const PriceVector& price, const FdConfig& fd = {},
                                           const Execution& exec = {});

/// Exact gradient of z at pi by implicit differentiation of every home.
Eigen::VectorXd implicit_gradient(const Scenario& scenario, const PriceVector& price, const Execution& exec = {});

struct ScalarQpSolution {
  double p = 0.0;
  double lambda_low = 0.0;   // multiplier of p >= lo
  double lambda_high = 0.0;  // multiplier of p <= hi
};

/// min c (p - pbar)^2 + pi p on [lo, hi].
ScalarQpSolution scalar_qp_closed_form(double c, double desired, double price, double lo, double hi);

struct PriceSearchResult {
  PriceVector price;
  double z = 0.0;
  long evaluations = 0;
};

/// One home, two slots: a heating HVAC unit and a basic appliance free over
/// both slots. The optimal price is interior in slot 0 and on the lower bound
/// in slot 1.
Scenario desk_toy_scenario();

/// Exhaustive search over the grid low + i * step in every slot. Ties go to
/// the lexicographically smallest price vector. Needs K <= 3 and at most 1e6
/// grid points.
PriceSearchResult brute_force_price_search(const Scenario& scenario, double grid_step);

struct BatchEnumeration {
  Eigen::VectorXd mean;           // average estimator over all C(N, B) batches
  Eigen::VectorXd full_gradient;  // sum of all homes' contributions
  long batches = 0;
};

/// Averages estimate_gradient over every size-B subset of homes, with all
/// contributions evaluated at pi. Needs C(N, B) <= 1e4.
BatchEnumeration enumerate_batch_estimator(const Scenario& scenario, const PriceVector& price, int batch_size,
                                           GradientScaling scaling = GradientScaling::unbiased);

struct DenseQpSolution {
  bool found = false;
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;
  std::vector<int> active;
};

/// Solves min 1/2 x' diag(H) x + q' x s.t. G x <= h by enumerating active
/// sets in order of size and solving each KKT system with full-pivot LU.
/// Returns the first candidate that is primal and dual feasible within
/// `tolerance`. Meant for n <= 10 and at most a dozen rows.
DenseQpSolution enumerate_kkt_qp(const Eigen::VectorXd& hessian_diag, const Eigen::VectorXd& linear,
                                 const Eigen::MatrixXd& G, const Eigen::VectorXd& h, double tolerance = 1e-9);

}  // namespace pricecoord
