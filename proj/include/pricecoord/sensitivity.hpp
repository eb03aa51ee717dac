#pragma once

#include <vector>

#include <Eigen/Dense>

#include "pricecoord/home_agent.hpp"
#include "pricecoord/polyhedron.hpp"

namespace pricecoord {

struct SensitivitySettings {
  /// Slack at or below which a row counts as active; multipliers at or below
  /// it mark the row as weakly active.
  double active_tolerance = 1e-6;
  /// Relative threshold for discarding linearly dependent active rows.
  double rank_tolerance = 1e-10;
  /// Tikhonov shift on the multiplier block of the saddle matrix.
  double regularization = 0.0;
  /// Reciprocal condition estimate below which the saddle matrix is refused.
  double min_rcond = 1e-14;
};

struct ActiveSetInfo {
  std::vector<int> strongly_active;  // slack <= tol, lambda > tol
  std::vector<int> weakly_active;    // slack <= tol, lambda <= tol
  /// Weakly active rows whose normal is not a combination of strongly active
  /// normals of the same block. Pinned pairs and duplicated bounds always
  /// leave one row with a zero multiplier; those rows are implied and do not
  /// make p* nonsmooth in the price.
  std::vector<int> degenerate_rows;

  bool degenerate() const { return !degenerate_rows.empty(); }
};

ActiveSetInfo active_set(const PrimalDualSolution& solution, const ConstraintPolyhedron& polyhedron,
                         double active_tolerance = 1e-6);

/// d p* / d pi for one home: (M*K) x K.
struct SensitivityMatrix {
  Eigen::MatrixXd jacobian;
  ActiveSetInfo active;
};

/// Differentiates the home's KKT system with respect to the price vector.
///
/// Only strongly active rows enter the reduced system; inactive rows keep
/// d lambda = 0 and weakly active rows are treated as inactive. Dependent
/// active rows are reduced to an independent subset first. Per appliance
/// block the system is
///
///   [ 2 c_j I   A'      ] [ dp      ]   [ -I ]
///   [ A         -delta I] [ dlambda ] = [  0 ]
///
/// since the cross derivative of p_j(t) pi(t) links variable (j, t) to
/// price slot t with weight one. Blocks are solved by dense LU with partial
/// pivoting. Throws SingularSystemError when a block cannot be factorized.
SensitivityMatrix price_jacobian(const PrimalDualSolution& solution, const ConstraintPolyhedron& polyhedron,
                                 const Eigen::VectorXd& weights, const SensitivitySettings& settings = {});

/// fp' (d p* / d pi): the home's term in the coordinator gradient, length K.
Eigen::VectorXd home_gradient_contribution(const SensitivityMatrix& sensitivity, const Eigen::VectorXd& partial);

}  // namespace pricecoord
