#include <random>

#include "doctest.h"
#include "pricecoord/appliances.hpp"
#include "pricecoord/sensitivity.hpp"

using namespace pricecoord;

namespace {

ConstraintPolyhedron scalar_box(double upper) {
  BlockBuilder b("scalar", 1);
  b.add_upper(0, upper, "upper");
  b.add_lower(0, 0.0, "lower");
  return assemble_home_polyhedron({b.build()});
}

Eigen::MatrixXd finite_difference_jacobian(const ConstraintPolyhedron& poly, const Eigen::VectorXd& w,
                                           const Eigen::MatrixXd& desired, const Eigen::VectorXd& price, double h) {
  const int K = static_cast<int>(price.size());
  Eigen::MatrixXd J(poly.num_variables(), K);
  for (int t = 0; t < K; ++t) {
    Eigen::VectorXd up = price, down = price;
    up(t) += h;
    down(t) -= h;
    J.col(t) = (solve_home_qp(poly, w, desired, up).p_star - solve_home_qp(poly, w, desired, down).p_star) / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("scalar active sets") {
  const auto poly = scalar_box(2.0);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  const Eigen::MatrixXd desired = Eigen::MatrixXd::Ones(1, 1);

  const auto clipped = solve_home_qp(poly, w, desired, Eigen::VectorXd::Constant(1, 4.0));
  const auto a = active_set(clipped, poly);
  CHECK(a.strongly_active == std::vector<int>{1});
  CHECK(a.weakly_active.empty());

  const auto interior = solve_home_qp(poly, w, desired, Eigen::VectorXd::Constant(1, 0.2));
  const auto b = active_set(interior, poly);
  CHECK(b.strongly_active.empty());
  CHECK(b.weakly_active.empty());

  // desired point on the upper bound, zero price: the bound holds with a zero multiplier
  const auto edge = solve_home_qp(poly, w, Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1));
  const auto c = active_set(edge, poly);
  CHECK(c.strongly_active.empty());
  CHECK(c.weakly_active == std::vector<int>{0});
  CHECK(c.degenerate());
}

TEST_CASE("pinned pairs are weakly active but not degenerate") {
  BlockBuilder b("pinned", 2);
  b.add_upper(0, 0.0, "upper0");
  b.add_lower(0, 0.0, "lower0");
  b.add_upper(1, 3.0, "upper1");
  b.add_lower(1, 0.0, "lower1");
  const auto poly = assemble_home_polyhedron({b.build()});
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  const auto s = solve_home_qp(poly, w, Eigen::MatrixXd::Constant(1, 2, 1.0), Eigen::VectorXd::Constant(2, 0.5));
  const auto a = active_set(s, poly);
  CHECK(a.strongly_active.size() == 1);
  CHECK(a.weakly_active.size() == 1);
  CHECK_FALSE(a.degenerate());
}

TEST_CASE("scalar jacobians and gradient contribution") {
  const auto poly = scalar_box(2.0);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  const Eigen::MatrixXd desired = Eigen::MatrixXd::Ones(1, 1);

  const auto interior = solve_home_qp(poly, w, desired, Eigen::VectorXd::Constant(1, 0.2));
  const auto J = price_jacobian(interior, poly, w);
  CHECK(J.jacobian(0, 0) == doctest::Approx(-0.5).epsilon(1e-9));

  // Q = 1: fp = -2(Q - p*) + 2c(p* - pbar) = -0.2 - 0.2
  const double fp = -2.0 * (1.0 - 0.9) + 2.0 * (0.9 - 1.0);
  CHECK(fp == doctest::Approx(-0.4));
  CHECK(home_gradient_contribution(J, Eigen::VectorXd::Constant(1, fp))(0) == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(home_gradient_contribution(J, Eigen::VectorXd::Zero(1))(0) == 0.0);

  const auto clipped = solve_home_qp(poly, w, desired, Eigen::VectorXd::Constant(1, 4.0));
  CHECK(std::abs(price_jacobian(clipped, poly, w).jacobian(0, 0)) <= 1e-9);
}

TEST_CASE("pinned variables have zero jacobian rows") {
  BasicApplianceSpec spec{2, 4, 1.5, 1.0};
  const int K = 8;
  const auto poly = assemble_home_polyhedron({build_basic_block(spec, K)});
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(1, 0.8);
  Eigen::MatrixXd desired = Eigen::MatrixXd::Zero(1, K);
  desired(0, 2) = 0.4;
  desired(0, 3) = 0.7;
  desired(0, 4) = 0.2;
  Eigen::VectorXd price = Eigen::VectorXd::LinSpaced(K, 0.2, 0.9);
  const auto s = solve_home_qp(poly, w, desired, price);
  REQUIRE(s.status == QpStatus::optimal);
  const auto J = price_jacobian(s, poly, w);
  for (int t = 0; t < K; ++t) {
    if (!spec.in_window(t)) CHECK(J.jacobian.row(t).norm() == 0.0);
  }
  // Window sum is fixed, so the columns of the window rows sum to zero.
  CHECK(J.jacobian.middleRows(2, 3).colwise().sum().norm() <= 1e-9);
}

TEST_CASE("jacobian matches central differences on appliance homes") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int K = 8;
    HvacSpec hvac;
    hvac.gamma1 = 0.02 + 0.06 * u(rng);
    hvac.gamma2 = 0.2 + 0.4 * u(rng);
    hvac.t_low = 20.0;
    hvac.t_upper = 23.0 + u(rng);
    hvac.t_init = 21.0;
    hvac.nominal_power = 2.0 + 2.0 * u(rng);
    EwhSpec ewh;
    ewh.capacity = 150.0;
    ewh.max_power = 3.0;
    ewh.init_level = 40.0;
    ewh.demand.assign(K, 0.0);
    ewh.demand[3] = 30.0 + 20.0 * u(rng);
    ewh.demand[6] = 20.0;
    const auto poly = assemble_home_polyhedron(
        {build_hvac_block(hvac, Eigen::VectorXd::Constant(K, 16.0)), build_ewh_block(ewh)});
    const Eigen::VectorXd w = Eigen::Vector2d(0.5 + 1.5 * u(rng), 0.5 + 1.5 * u(rng));
    Eigen::MatrixXd desired(2, K);
    for (int t = 0; t < K; ++t) {
      desired(0, t) = 2.0 * u(rng);
      desired(1, t) = 2.0 * u(rng);
    }
    Eigen::VectorXd price(K);
    for (int t = 0; t < K; ++t) price(t) = 0.1 + 0.9 * u(rng);

    const auto s = solve_home_qp(poly, w, desired, price);
    REQUIRE(s.status == QpStatus::optimal);
    const auto J = price_jacobian(s, poly, w);
    if (J.active.degenerate()) continue;
    const Eigen::MatrixXd fd = finite_difference_jacobian(poly, w, desired, price, 1e-5);
    const double err = (J.jacobian - fd).lpNorm<Eigen::Infinity>() / (1.0 + fd.lpNorm<Eigen::Infinity>());
    CAPTURE(trial);
    CHECK(err <= 1e-4);
    ++checked;
  }
  CHECK(checked >= 15);
}
