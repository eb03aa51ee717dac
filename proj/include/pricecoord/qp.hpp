#pragma once

#include <vector>

#include <Eigen/Dense>

namespace pricecoord {

struct QpSettings {
  int max_iter = 20000;
  int rho_update_interval = 50;
  int check_interval = 5;
  int polish_interval = 25;
  int max_polish_rounds = 12;
  double rho = 0.1;
  double sigma = 1e-6;
  double relaxation = 1.6;
  /// Bound on every KKT residual for a result to count as optimal.
  double tolerance = 1e-8;
  double infeasibility_tolerance = 1e-7;
};

enum class QpStatus { optimal, max_iter, infeasible };

const char* to_string(QpStatus status);

struct KktResidual {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double min_multiplier = 0.0;

  double worst() const;
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  bool polished = false;
  KktResidual residual;
};

/// Residuals of (x, lambda) for min 1/2 x'diag(H)x + q'x s.t. Gx <= h.
KktResidual qp_residuals(const Eigen::VectorXd& hessian_diag, const Eigen::VectorXd& linear, const Eigen::MatrixXd& G,
                         const Eigen::VectorXd& h, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda);

/// Dense strictly convex QP with a diagonal Hessian:
///
///   minimize 1/2 x' diag(H) x + q' x   subject to  G x <= h
///
/// Operator splitting (ADMM on the split G x = z, z <= h) with periodic
/// active-set polishing: candidate active rows are taken from the ADMM
/// iterate, reduced to a linearly independent subset, and the resulting
/// equality-constrained QP is solved exactly. Primal-dual active-set
/// corrections fix a wrong guess. A successful polish returns multipliers
/// that are nonzero only on an independent active subset.
///
/// G, h and the Hessian are fixed at construction so the ADMM factorization
/// is reused across calls with different q. The solver keeps a reference to
/// G; the matrix must outlive it.
class QpSolver {
 public:
  QpSolver(Eigen::VectorXd hessian_diag, const Eigen::MatrixXd& G, Eigen::VectorXd h, QpSettings settings = {});

  QpResult solve(const Eigen::VectorXd& linear, const QpResult* warm = nullptr);

  int num_variables() const { return static_cast<int>(hessian_.size()); }
  int num_rows() const { return static_cast<int>(h_.size()); }
  const QpSettings& settings() const { return settings_; }

 private:
  struct Polished {
    bool ok = false;
    Eigen::VectorXd x;
    Eigen::VectorXd lambda;  // unscaled, full length
  };

  void factorize(double rho);
  Polished polish(const Eigen::VectorXd& linear, std::vector<int> candidates) const;
  std::vector<int> independent_subset(const std::vector<int>& ordered_rows) const;
  bool solve_equality_qp(const Eigen::VectorXd& linear, const std::vector<int>& active, Eigen::VectorXd& x,
                         Eigen::VectorXd& lambda_active) const;
  QpResult finish(const Eigen::VectorXd& linear, Eigen::VectorXd x, Eigen::VectorXd lambda, QpStatus status,
                  int iterations, bool polished) const;

  Eigen::VectorXd hessian_;
  const Eigen::MatrixXd* G_;
  Eigen::VectorXd h_;
  QpSettings settings_;

  Eigen::VectorXd row_scale_;  // D, so that D G has unit rows
  Eigen::VectorXd hs_;         // D h
  Eigen::MatrixXd gram_;       // (D G)'(D G)
  Eigen::LLT<Eigen::MatrixXd> kkt_;
  double factored_rho_ = -1.0;
};

}  // namespace pricecoord
