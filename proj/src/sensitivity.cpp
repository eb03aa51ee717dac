#include "pricecoord/sensitivity.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "pricecoord/errors.hpp"

namespace pricecoord {

ActiveSetInfo active_set(const PrimalDualSolution& solution, const ConstraintPolyhedron& polyhedron,
                         double active_tolerance) {
  ActiveSetInfo info;
  if (polyhedron.num_rows() == 0) return info;
  const Eigen::VectorXd slack = polyhedron.rhs() - polyhedron.apply(solution.p_star);
  for (int i = 0; i < polyhedron.num_rows(); ++i) {
    if (slack(i) > active_tolerance) continue;
    if (solution.lambda_star(i) > active_tolerance) {
      info.strongly_active.push_back(i);
    } else {
      info.weakly_active.push_back(i);
    }
  }
  if (info.weakly_active.empty()) return info;

  std::vector<std::vector<int>> strong(polyhedron.num_blocks()), weak(polyhedron.num_blocks());
  for (int row : info.strongly_active) strong[polyhedron.locate(row).block].push_back(row);
  for (int row : info.weakly_active) weak[polyhedron.locate(row).block].push_back(row);
  for (int j = 0; j < polyhedron.num_blocks(); ++j) {
    if (weak[j].empty()) continue;
    const auto& block = polyhedron.block(j);
    const int first = polyhedron.range(j).row_begin;
    if (strong[j].empty()) {
      info.degenerate_rows.insert(info.degenerate_rows.end(), weak[j].begin(), weak[j].end());
      continue;
    }
    Eigen::MatrixXd basis(block.horizon(), static_cast<Eigen::Index>(strong[j].size()));
    for (std::size_t k = 0; k < strong[j].size(); ++k) basis.col(k) = block.matrix.row(strong[j][k] - first).transpose();
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
    for (int row : weak[j]) {
      const Eigen::VectorXd g = block.matrix.row(row - first).transpose();
      const Eigen::VectorXd coeff = qr.solve(g);
      if ((basis * coeff - g).norm() > 1e-9 * g.norm()) info.degenerate_rows.push_back(row);
    }
  }
  std::sort(info.degenerate_rows.begin(), info.degenerate_rows.end());
  return info;
}

namespace {

// Drops linearly dependent rows (pinned pairs, duplicated bounds). On the
// active set they describe the same affine subspace, so the reduced system
// stays regular without perturbing its solution.
std::vector<int> independent_rows(const Eigen::MatrixXd& matrix, const std::vector<int>& rows, double tolerance) {
  if (rows.empty()) return rows;
  Eigen::MatrixXd transposed(matrix.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) transposed.col(k) = matrix.row(rows[k]).transpose();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(transposed);
  qr.setThreshold(tolerance);
  std::vector<int> kept;
  for (Eigen::Index k = 0; k < qr.rank(); ++k) kept.push_back(rows[qr.colsPermutation().indices()(k)]);
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

SensitivityMatrix price_jacobian(const PrimalDualSolution& solution, const ConstraintPolyhedron& polyhedron,
                                 const Eigen::VectorXd& weights, const SensitivitySettings& settings) {
  const int K = polyhedron.horizon();
  if (weights.size() != polyhedron.num_blocks()) throw std::invalid_argument("jacobian: weight count differs from blocks");
  if (solution.status != QpStatus::optimal) throw std::invalid_argument("jacobian: solution is not optimal");

  SensitivityMatrix out;
  out.active = active_set(solution, polyhedron, settings.active_tolerance);
  out.jacobian = Eigen::MatrixXd::Zero(polyhedron.num_variables(), K);

  std::vector<std::vector<int>> per_block(polyhedron.num_blocks());
  for (int row : out.active.strongly_active) {
    const auto origin = polyhedron.locate(row);
    per_block[origin.block].push_back(origin.local_row);
  }

  for (int j = 0; j < polyhedron.num_blocks(); ++j) {
    const auto& block = polyhedron.block(j);
    const auto rows = independent_rows(block.matrix, per_block[j], settings.rank_tolerance);
    const int a = static_cast<int>(rows.size());
    const int dim = K + a;

    Eigen::MatrixXd saddle = Eigen::MatrixXd::Zero(dim, dim);
    saddle.topLeftCorner(K, K).diagonal().setConstant(2.0 * weights(j));
    for (int k = 0; k < a; ++k) {
      saddle.block(K + k, 0, 1, K) = block.matrix.row(rows[k]);
      saddle.block(0, K + k, K, 1) = block.matrix.row(rows[k]).transpose();
      saddle(K + k, K + k) = -settings.regularization;
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dim, K);
    rhs.topRows(K).diagonal().setConstant(-1.0);

    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(saddle);
    const double rcond = lu.rcond();
    if (!(rcond >= settings.min_rcond)) {
      std::ostringstream msg;
      msg << "reduced KKT system of block '" << block.appliance << "' is singular (rcond " << rcond << ", "
          << a << " strongly active rows, " << out.active.degenerate_rows.size() << " degenerate rows in home)";
      throw SingularSystemError(msg.str());
    }
    const Eigen::MatrixXd solved = lu.solve(rhs);
    if (!solved.allFinite()) throw SingularSystemError("reduced KKT solve of block '" + block.appliance + "' is not finite");
    out.jacobian.middleRows(polyhedron.range(j).col_begin, K) = solved.topRows(K);
  }
  return out;
}

Eigen::VectorXd home_gradient_contribution(const SensitivityMatrix& sensitivity, const Eigen::VectorXd& partial) {
  if (partial.size() != sensitivity.jacobian.rows()) throw std::invalid_argument("partial length differs from jacobian rows");
  return sensitivity.jacobian.transpose() * partial;
}

}  // namespace pricecoord
