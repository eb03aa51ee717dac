#pragma once

#include <vector>

#include <Eigen/Dense>

#include "pricecoord/polyhedron.hpp"
#include "pricecoord/qp.hpp"

namespace pricecoord {

/// pi(t), currency per kWh, one entry per slot.
using PriceVector = Eigen::VectorXd;

/// Optimal schedule and multipliers of one home for one price vector.
struct PrimalDualSolution {
  Eigen::VectorXd p_star;       // M*K, appliance-major
  Eigen::VectorXd lambda_star;  // one per polyhedron row, >= 0
  double objective_value = 0.0;
  KktResidual residuals;
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
};

/// Flattens an (M x K) per-appliance matrix into the stacked decision order.
Eigen::VectorXd stack_rows(const Eigen::MatrixXd& per_appliance);
/// Inverse of stack_rows.
Eigen::MatrixXd unstack(const Eigen::VectorXd& stacked, int horizon);
/// c_j repeated over the K slots of appliance j.
Eigen::VectorXd per_variable_weights(const Eigen::VectorXd& weights, int horizon);

/// sum_j sum_t p_j(t) pi(t) + c_j (p_j(t) - pbar_j(t))^2
double home_objective(const Eigen::VectorXd& p, const PriceVector& price, const Eigen::VectorXd& weights,
                      const Eigen::MatrixXd& desired);

/// Stationarity, primal, complementarity and dual-sign residuals of a
/// solution against the home's KKT system.
KktResidual kkt_residuals(const PrimalDualSolution& solution, const ConstraintPolyhedron& polyhedron,
                          const Eigen::VectorXd& weights, const Eigen::MatrixXd& desired, const PriceVector& price);

/// Reusable solver for one home. The objective and constraints separate by
/// appliance, so each appliance block is an independent QP with its own
/// cached factorization. Holds references to the polyhedron, weights and
/// desired schedule; they must outlive the solver.
class HomeSolver {
 public:
  HomeSolver(const ConstraintPolyhedron& polyhedron, const Eigen::VectorXd& weights, const Eigen::MatrixXd& desired,
             QpSettings settings = {});

  PrimalDualSolution solve(const PriceVector& price, const PrimalDualSolution* warm = nullptr);

  const ConstraintPolyhedron& polyhedron() const { return *polyhedron_; }

 private:
  const ConstraintPolyhedron* polyhedron_;
  const Eigen::VectorXd* weights_;
  const Eigen::MatrixXd* desired_;
  std::vector<QpSolver> blocks_;
};

/// One-shot cold solve.
PrimalDualSolution solve_home_qp(const ConstraintPolyhedron& polyhedron, const Eigen::VectorXd& weights,
                                 const Eigen::MatrixXd& desired, const PriceVector& price, QpSettings settings = {});

}  // namespace pricecoord
