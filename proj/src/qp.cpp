#include "pricecoord/qp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pricecoord {

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iter: return "max_iter";
    case QpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

double KktResidual::worst() const {
  return std::max({stationarity, primal, complementarity, std::max(0.0, -min_multiplier)});
}

KktResidual qp_residuals(const Eigen::VectorXd& hessian_diag, const Eigen::VectorXd& linear, const Eigen::MatrixXd& G,
                         const Eigen::VectorXd& h, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) {
  KktResidual r;
  const Eigen::VectorXd gradient = hessian_diag.cwiseProduct(x) + linear + G.transpose() * lambda;
  r.stationarity = gradient.size() ? gradient.lpNorm<Eigen::Infinity>() : 0.0;
  if (h.size() > 0) {
    const Eigen::VectorXd gap = G * x - h;
    r.primal = std::max(0.0, gap.maxCoeff());
    r.complementarity = lambda.cwiseProduct(gap).lpNorm<Eigen::Infinity>();
    r.min_multiplier = lambda.minCoeff();
  }
  return r;
}

QpSolver::QpSolver(Eigen::VectorXd hessian_diag, const Eigen::MatrixXd& G, Eigen::VectorXd h, QpSettings settings)
    : hessian_(std::move(hessian_diag)), G_(&G), h_(std::move(h)), settings_(settings) {
  const auto n = hessian_.size();
  if (G.cols() != n || G.rows() != h_.size()) throw std::invalid_argument("qp: inconsistent problem dimensions");
  if ((hessian_.array() <= 0.0).any()) throw std::invalid_argument("qp: Hessian diagonal must be strictly positive");

  row_scale_.resize(h_.size());
  for (Eigen::Index i = 0; i < h_.size(); ++i) {
    const double norm = G.row(i).norm();
    if (norm == 0.0) throw std::invalid_argument("qp: constraint row without variables");
    row_scale_(i) = 1.0 / norm;
  }
  hs_ = row_scale_.cwiseProduct(h_);
  const Eigen::MatrixXd scaled = row_scale_.asDiagonal() * G;
  gram_ = scaled.transpose() * scaled;
}

void QpSolver::factorize(double rho) {
  Eigen::MatrixXd kkt = rho * gram_;
  kkt.diagonal() += hessian_;
  kkt.diagonal().array() += settings_.sigma;
  kkt_.compute(kkt);
  if (kkt_.info() != Eigen::Success) throw std::runtime_error("qp: ADMM system is not positive definite");
  factored_rho_ = rho;
}

std::vector<int> QpSolver::independent_subset(const std::vector<int>& ordered_rows) const {
  const auto n = hessian_.size();
  Eigen::MatrixXd basis(n, std::min<Eigen::Index>(n, static_cast<Eigen::Index>(ordered_rows.size())));
  Eigen::Index rank = 0;
  std::vector<int> kept;
  for (int row : ordered_rows) {
    if (rank == n) break;
    Eigen::VectorXd v = (row_scale_(row) * G_->row(row)).transpose();
    // Two Gram-Schmidt passes keep the basis orthogonal to working precision.
    for (int pass = 0; pass < 2; ++pass) {
      if (rank > 0) v -= basis.leftCols(rank) * (basis.leftCols(rank).transpose() * v);
    }
    const double norm = v.norm();
    if (norm > 1e-9) {
      if (rank == basis.cols()) basis.conservativeResize(n, rank + 1);
      basis.col(rank++) = v / norm;
      kept.push_back(row);
    }
  }
  return kept;
}

bool QpSolver::solve_equality_qp(const Eigen::VectorXd& linear, const std::vector<int>& active, Eigen::VectorXd& x,
                                 Eigen::VectorXd& lambda_active) const {
  const auto n = hessian_.size();
  const auto r = static_cast<Eigen::Index>(active.size());
  const Eigen::VectorXd inv_h = hessian_.cwiseInverse();
  if (r == 0) {
    x = -inv_h.cwiseProduct(linear);
    lambda_active.resize(0);
    return true;
  }
  // Scaled active rows A x = b; eliminate x = -H^{-1}(q + A' mu).
  Eigen::MatrixXd A(r, n);
  Eigen::VectorXd b(r);
  for (Eigen::Index k = 0; k < r; ++k) {
    A.row(k) = row_scale_(active[k]) * G_->row(active[k]);
    b(k) = hs_(active[k]);
  }
  const Eigen::MatrixXd AHinv = A * inv_h.asDiagonal();
  const Eigen::MatrixXd schur = AHinv * A.transpose();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(schur);
  if (ldlt.info() != Eigen::Success) return false;
  Eigen::VectorXd mu = ldlt.solve(-AHinv * linear - b);
  x = -inv_h.cwiseProduct(linear + A.transpose() * mu);
  // One step of iterative refinement on A x = b.
  mu += ldlt.solve(A * x - b);
  x = -inv_h.cwiseProduct(linear + A.transpose() * mu);
  if (!x.allFinite() || !mu.allFinite()) return false;
  lambda_active = mu;
  return true;
}

QpSolver::Polished QpSolver::polish(const Eigen::VectorXd& linear, std::vector<int> candidates) const {
  Polished out;
  const auto m = h_.size();
  std::vector<int> active = independent_subset(candidates);
  std::vector<std::vector<int>> seen;

  for (int round = 0; round < settings_.max_polish_rounds; ++round) {
    std::sort(active.begin(), active.end());
    if (std::find(seen.begin(), seen.end(), active) != seen.end()) return out;  // cycling
    seen.push_back(active);

    Eigen::VectorXd x, mu;
    if (!solve_equality_qp(linear, active, x, mu)) return out;

    const double mu_scale = std::max(1.0, mu.size() ? mu.lpNorm<Eigen::Infinity>() : 0.0);
    std::vector<std::pair<double, int>> negative;
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
      if (mu(k) < -1e-12 * mu_scale) negative.emplace_back(mu(k), active[k]);
    }
    std::vector<char> in_active(m, 0);
    for (int row : active) in_active[row] = 1;
    std::vector<std::pair<double, int>> violated;
    const Eigen::VectorXd slack = hs_ - row_scale_.cwiseProduct(*G_ * x);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!in_active[i] && slack(i) < -1e-11 * std::max(1.0, std::abs(hs_(i)))) violated.emplace_back(slack(i), i);
    }

    if (negative.empty() && violated.empty()) {
      out.ok = true;
      out.x = std::move(x);
      out.lambda = Eigen::VectorXd::Zero(m);
      for (Eigen::Index k = 0; k < mu.size(); ++k) out.lambda(active[k]) = std::max(0.0, mu(k)) * row_scale_(active[k]);
      return out;
    }

    // Drop rows with wrong-signed multipliers, then add the most violated
    // rows that keep the working set independent.
    std::vector<int> next;
    for (int row : active) {
      const bool drop = std::any_of(negative.begin(), negative.end(), [row](const auto& p) { return p.second == row; });
      if (!drop) next.push_back(row);
    }
    std::sort(violated.begin(), violated.end());
    for (const auto& v : violated) next.push_back(v.second);
    const std::vector<int> independent = independent_subset(next);
    if (negative.empty() && independent.size() == active.size()) return out;  // nothing could be added
    active = independent;
  }
  return out;
}

QpResult QpSolver::finish(const Eigen::VectorXd& linear, Eigen::VectorXd x, Eigen::VectorXd lambda, QpStatus status,
                          int iterations, bool polished) const {
  QpResult result;
  result.residual = qp_residuals(hessian_, linear, *G_, h_, x, lambda);
  result.x = std::move(x);
  result.lambda = std::move(lambda);
  result.iterations = iterations;
  result.polished = polished;
  result.status = status;
  if (status == QpStatus::optimal && result.residual.worst() > settings_.tolerance) result.status = QpStatus::max_iter;
  return result;
}

QpResult QpSolver::solve(const Eigen::VectorXd& linear, const QpResult* warm) {
  const auto n = hessian_.size();
  const auto m = h_.size();
  if (linear.size() != n) throw std::invalid_argument("qp: linear term has the wrong length");

  if (m == 0) {
    return finish(linear, -hessian_.cwiseInverse().cwiseProduct(linear), Eigen::VectorXd(0), QpStatus::optimal, 0, true);
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);  // scaled multipliers
  const bool warm_ok = warm != nullptr && warm->x.size() == n && warm->lambda.size() == m;
  if (warm_ok) {
    x = warm->x;
    y = warm->lambda.cwiseQuotient(row_scale_);
    // Try the previous active set directly; small price moves rarely change it.
    std::vector<int> previous;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (warm->lambda(i) > 0.0) previous.push_back(static_cast<int>(i));
    }
    std::stable_sort(previous.begin(), previous.end(), [&](int a, int b) { return y(a) > y(b); });
    auto polished = polish(linear, previous);
    if (polished.ok) {
      auto result = finish(linear, std::move(polished.x), std::move(polished.lambda), QpStatus::optimal, 0, true);
      if (result.status == QpStatus::optimal) return result;
    }
  }

  Eigen::VectorXd Gx = row_scale_.cwiseProduct(*G_ * x);
  Eigen::VectorXd z = Gx.cwiseMin(hs_);
  double rho = factored_rho_ > 0.0 ? factored_rho_ : settings_.rho;
  if (factored_rho_ != rho) factorize(rho);

  Eigen::VectorXd x_tilde(n), z_tilde(m), z_hat(m), y_prev(m), rhs(n);
  const double alpha = settings_.relaxation;
  const double eps_inf = settings_.infeasibility_tolerance;

  for (int iter = 1; iter <= settings_.max_iter; ++iter) {
    y_prev = y;
    rhs = settings_.sigma * x - linear + G_->transpose() * row_scale_.cwiseProduct(rho * z - y);
    x_tilde = kkt_.solve(rhs);
    z_tilde = row_scale_.cwiseProduct(*G_ * x_tilde);
    x = alpha * x_tilde + (1.0 - alpha) * x;
    z_hat = alpha * z_tilde + (1.0 - alpha) * z;
    const Eigen::VectorXd z_next = (z_hat + y / rho).cwiseMin(hs_);
    y += rho * (z_hat - z_next);
    z = z_next;

    const bool check = iter % settings_.check_interval == 0;
    const bool adapt = iter % settings_.rho_update_interval == 0;
    const bool try_polish = iter % settings_.polish_interval == 0;
    if (!check && !adapt && !try_polish) continue;

    Gx = row_scale_.cwiseProduct(*G_ * x);
    const Eigen::VectorXd Gty = G_->transpose() * row_scale_.cwiseProduct(y);
    const Eigen::VectorXd Hx = hessian_.cwiseProduct(x);
    const double r_prim = (Gx - z).lpNorm<Eigen::Infinity>();
    const double r_dual = (Hx + linear + Gty).lpNorm<Eigen::Infinity>();

    if (check) {
      // Primal infeasibility certificate: project dy onto the recession cone
      // of {z <= h}, i.e. keep its nonnegative part.
      const Eigen::VectorXd dy = (y - y_prev).cwiseMax(0.0);
      const double dy_norm = dy.lpNorm<Eigen::Infinity>();
      if (dy_norm > 1e-12) {
        const double gtdy = (G_->transpose() * row_scale_.cwiseProduct(dy)).lpNorm<Eigen::Infinity>();
        if (gtdy <= eps_inf * dy_norm && hs_.dot(dy) < -eps_inf * dy_norm) {
          return finish(linear, x, row_scale_.cwiseProduct(y).cwiseMax(0.0), QpStatus::infeasible, iter, false);
        }
      }
    }

    const double prim_scale = std::max({Gx.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>(), 1.0});
    const double dual_scale =
        std::max({Hx.lpNorm<Eigen::Infinity>(), Gty.lpNorm<Eigen::Infinity>(), linear.lpNorm<Eigen::Infinity>(), 1.0});
    const bool loosely_converged = r_prim <= 1e-5 * prim_scale && r_dual <= 1e-5 * dual_scale;

    if (try_polish || (check && loosely_converged)) {
      std::vector<int> candidates;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (y(i) > hs_(i) - z(i)) candidates.push_back(static_cast<int>(i));
      }
      std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) { return y(a) > y(b); });
      auto polished = polish(linear, std::move(candidates));
      if (polished.ok) {
        auto result = finish(linear, std::move(polished.x), std::move(polished.lambda), QpStatus::optimal, iter, true);
        if (result.status == QpStatus::optimal) return result;
      }
      // Plain ADMM accuracy can also be good enough on its own.
      const Eigen::VectorXd lambda = row_scale_.cwiseProduct(y).cwiseMax(0.0);
      const auto plain = qp_residuals(hessian_, linear, *G_, h_, x, lambda);
      if (plain.worst() <= settings_.tolerance) return finish(linear, x, lambda, QpStatus::optimal, iter, false);
    }

    if (adapt && r_prim > 0.0 && r_dual > 0.0) {
      const double ratio = (r_prim / prim_scale) / (r_dual / dual_scale);
      const double proposed = std::clamp(rho * std::sqrt(ratio), 1e-6, 1e6);
      if (proposed > 5.0 * rho || proposed < 0.2 * rho) {
        rho = proposed;
        factorize(rho);
      }
    }
  }
  return finish(linear, x, row_scale_.cwiseProduct(y).cwiseMax(0.0), QpStatus::max_iter, settings_.max_iter, false);
}

}  // namespace pricecoord
