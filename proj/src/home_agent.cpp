#include "pricecoord/home_agent.hpp"

#include <stdexcept>

namespace pricecoord {

Eigen::VectorXd stack_rows(const Eigen::MatrixXd& per_appliance) {
  const auto M = per_appliance.rows();
  const auto K = per_appliance.cols();
  Eigen::VectorXd out(M * K);
  for (Eigen::Index j = 0; j < M; ++j) out.segment(j * K, K) = per_appliance.row(j).transpose();
  return out;
}

Eigen::MatrixXd unstack(const Eigen::VectorXd& stacked, int horizon) {
  if (horizon <= 0 || stacked.size() % horizon != 0) throw std::invalid_argument("stacked length is not a multiple of K");
  const auto M = stacked.size() / horizon;
  Eigen::MatrixXd out(M, horizon);
  for (Eigen::Index j = 0; j < M; ++j) out.row(j) = stacked.segment(j * horizon, horizon).transpose();
  return out;
}

Eigen::VectorXd per_variable_weights(const Eigen::VectorXd& weights, int horizon) {
  Eigen::VectorXd out(weights.size() * horizon);
  for (Eigen::Index j = 0; j < weights.size(); ++j) out.segment(j * horizon, horizon).setConstant(weights(j));
  return out;
}

namespace {

void check_dimensions(const Eigen::VectorXd& p, const PriceVector& price, const Eigen::VectorXd& weights,
                      const Eigen::MatrixXd& desired) {
  const auto K = price.size();
  if (desired.cols() != K || desired.rows() != weights.size() || p.size() != weights.size() * K) {
    throw std::invalid_argument("home dimensions disagree (schedule, price, weights, desired)");
  }
}

}  // namespace

double home_objective(const Eigen::VectorXd& p, const PriceVector& price, const Eigen::VectorXd& weights,
                      const Eigen::MatrixXd& desired) {
  check_dimensions(p, price, weights, desired);
  const auto K = price.size();
  double total = 0.0;
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    const auto pj = p.segment(j * K, K);
    total += pj.dot(price);
    total += weights(j) * (pj - desired.row(j).transpose()).squaredNorm();
  }
  return total;
}

KktResidual kkt_residuals(const PrimalDualSolution& solution, const ConstraintPolyhedron& polyhedron,
                          const Eigen::VectorXd& weights, const Eigen::MatrixXd& desired, const PriceVector& price) {
  check_dimensions(solution.p_star, price, weights, desired);
  const int K = static_cast<int>(price.size());
  const Eigen::VectorXd c = per_variable_weights(weights, K);
  const Eigen::VectorXd gradient = 2.0 * c.cwiseProduct(solution.p_star - stack_rows(desired)) +
                                   price.replicate(weights.size(), 1) +
                                   polyhedron.apply_transpose(solution.lambda_star);
  KktResidual r;
  r.stationarity = gradient.lpNorm<Eigen::Infinity>();
  if (polyhedron.num_rows() > 0) {
    const Eigen::VectorXd gap = polyhedron.apply(solution.p_star) - polyhedron.rhs();
    r.primal = std::max(0.0, gap.maxCoeff());
    r.complementarity = solution.lambda_star.cwiseProduct(gap).lpNorm<Eigen::Infinity>();
    r.min_multiplier = solution.lambda_star.minCoeff();
  }
  return r;
}

HomeSolver::HomeSolver(const ConstraintPolyhedron& polyhedron, const Eigen::VectorXd& weights,
                       const Eigen::MatrixXd& desired, QpSettings settings)
    : polyhedron_(&polyhedron), weights_(&weights), desired_(&desired) {
  const int K = polyhedron.horizon();
  if (weights.size() != polyhedron.num_blocks() || desired.rows() != weights.size() || desired.cols() != K) {
    throw std::invalid_argument("home solver: weights/desired do not match the polyhedron");
  }
  if ((weights.array() <= 0.0).any()) throw std::invalid_argument("home solver: comfort weights must be positive");
  blocks_.reserve(polyhedron.num_blocks());
  for (int j = 0; j < polyhedron.num_blocks(); ++j) {
    const auto& b = polyhedron.block(j);
    blocks_.emplace_back(Eigen::VectorXd::Constant(K, 2.0 * weights(j)), b.matrix, b.rhs, settings);
  }
}

PrimalDualSolution HomeSolver::solve(const PriceVector& price, const PrimalDualSolution* warm) {
  const int K = polyhedron_->horizon();
  if (price.size() != K) throw std::invalid_argument("price length differs from the horizon");
  if (!price.allFinite()) throw std::invalid_argument("price vector has non-finite entries");

  PrimalDualSolution out;
  out.p_star.resize(polyhedron_->num_variables());
  out.lambda_star.resize(polyhedron_->num_rows());
  out.status = QpStatus::optimal;
  const bool warm_ok = warm != nullptr && warm->p_star.size() == out.p_star.size() &&
                       warm->lambda_star.size() == out.lambda_star.size();

  for (int j = 0; j < polyhedron_->num_blocks(); ++j) {
    const auto& range = polyhedron_->range(j);
    const Eigen::VectorXd linear = price - 2.0 * (*weights_)(j) * desired_->row(j).transpose();
    QpResult seed;
    if (warm_ok) {
      seed.x = warm->p_star.segment(range.col_begin, K);
      seed.lambda = warm->lambda_star.segment(range.row_begin, range.rows);
    }
    const QpResult r = blocks_[j].solve(linear, warm_ok ? &seed : nullptr);
    out.p_star.segment(range.col_begin, K) = r.x;
    out.lambda_star.segment(range.row_begin, range.rows) = r.lambda;
    out.iterations += r.iterations;
    if (r.status == QpStatus::infeasible || (r.status == QpStatus::max_iter && out.status == QpStatus::optimal)) {
      out.status = r.status;
    }
  }
  out.objective_value = home_objective(out.p_star, price, *weights_, *desired_);
  out.residuals = kkt_residuals(out, *polyhedron_, *weights_, *desired_, price);
  return out;
}

PrimalDualSolution solve_home_qp(const ConstraintPolyhedron& polyhedron, const Eigen::VectorXd& weights,
                                 const Eigen::MatrixXd& desired, const PriceVector& price, QpSettings settings) {
  HomeSolver solver(polyhedron, weights, desired, settings);
  return solver.solve(price);
}

}  // namespace pricecoord
