#include <cmath>

#include "doctest.h"
#include "pricecoord/oracle.hpp"
#include "pricecoord/sensitivity.hpp"
#include "support.hpp"

using namespace pricecoord;
using pricecoord::testing::box_scenario;

TEST_CASE("scalar closed form") {
  const auto interior = scalar_qp_closed_form(1.0, 1.0, 0.2, 0.0, 2.0);
  CHECK(interior.p == doctest::Approx(0.9));
  CHECK(interior.lambda_low == 0.0);
  CHECK(interior.lambda_high == 0.0);

  const auto low = scalar_qp_closed_form(1.0, 1.0, 4.0, 0.0, 2.0);
  CHECK(low.p == 0.0);
  CHECK(low.lambda_low == doctest::Approx(2.0));
  CHECK(low.lambda_high == 0.0);

  const auto high = scalar_qp_closed_form(2.0, 3.0, 0.4, 0.0, 2.0);
  CHECK(high.p == 2.0);
  CHECK(high.lambda_high == doctest::Approx(3.6));

  const auto pinned = scalar_qp_closed_form(1.0, 1.0, 0.5, 0.7, 0.7);
  CHECK(pinned.p == 0.7);
}

TEST_CASE("closed form agrees with the home solver") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double c = 0.2 + 2.0 * u(gen), desired = 3.0 * u(gen), price = 2.0 * u(gen) - 0.5;
    const double lo = u(gen), hi = lo + 2.0 * u(gen);
    const auto exact = scalar_qp_closed_form(c, desired, price, lo, hi);
    BlockBuilder b("scalar", 1);
    b.add_upper(0, hi, "upper");
    b.add_lower(0, lo, "lower");
    const auto poly = assemble_home_polyhedron({b.build()});
    const auto s = solve_home_qp(poly, Eigen::VectorXd::Constant(1, c), Eigen::MatrixXd::Constant(1, 1, desired),
                                 Eigen::VectorXd::Constant(1, price));
    CHECK(std::abs(s.p_star(0) - exact.p) < 1e-6);
    CHECK(std::abs(s.lambda_star(0) - exact.lambda_high) < 1e-6);
    CHECK(std::abs(s.lambda_star(1) - exact.lambda_low) < 1e-6);
  }
}

TEST_CASE("finite differences on the scalar toy") {
  const auto s = box_scenario({Eigen::MatrixXd::Ones(1, 1)}, {Eigen::VectorXd::Ones(1)}, Eigen::VectorXd::Ones(1), 0.0,
                              2.0);
  const PriceVector price = Eigen::VectorXd::Constant(1, 0.2);
  const auto fd = finite_difference_gradient(s, price);
  CHECK(std::abs(fd(0) - 0.2) < 1e-6);
  CHECK(std::abs(implicit_gradient(s, price)(0) - 0.2) < 1e-9);
}

TEST_CASE("finite differences vanish on a clipped plateau") {
  // desired loads far above the upper bound: every slot is clipped
  const auto s = box_scenario({Eigen::MatrixXd::Constant(2, 3, 5.0)}, {Eigen::Vector2d(1.0, 2.0)},
                              Eigen::VectorXd::Constant(3, 4.0), 0.0, 1.0);
  const PriceVector price = Eigen::Vector3d(0.3, 0.6, 0.9);
  const auto fd = finite_difference_gradient(s, price);
  CHECK(fd.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(implicit_gradient(s, price).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("finite differences match the implicit gradient") {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = pricecoord::testing::random_box_scenario(3, 2, 8, gen);
    std::uniform_real_distribution<double> u(0.15, 0.95);
    PriceVector price(8);
    for (int t = 0; t < 8; ++t) price(t) = u(gen);
    const auto fd = finite_difference_gradient(s, price);
    const auto g = implicit_gradient(s, price);
    CHECK((g - fd).cwiseAbs().maxCoeff() / (1.0 + fd.cwiseAbs().maxCoeff()) < 1e-4);
  }
}

TEST_CASE("serial and parallel finite differences agree") {
  std::mt19937_64 gen(2);
  const auto s = pricecoord::testing::random_box_scenario(3, 1, 5, gen);
  const PriceVector price = Eigen::VectorXd::Constant(5, 0.5);
  CHECK(finite_difference_gradient(s, price, {}, {ExecPolicy::serial, 1}) ==
        finite_difference_gradient(s, price, {}, {ExecPolicy::parallel, 3}));
}

TEST_CASE("brute-force tie rule") {
  // desired zero and clipped at zero: z does not depend on the price
  const auto s = box_scenario({Eigen::MatrixXd::Zero(1, 2)}, {Eigen::VectorXd::Ones(1)}, Eigen::Vector2d(1.0, 1.0), 0.0,
                              1.0);
  const auto r = brute_force_price_search(s, 0.1);
  CHECK(r.evaluations == 100);
  CHECK(r.price(0) == doctest::Approx(0.1));
  CHECK(r.price(1) == doctest::Approx(0.1));
}

TEST_CASE("brute-force grid refinement") {
  const auto s = box_scenario({(Eigen::MatrixXd(1, 2) << 2.0, 1.0).finished()}, {Eigen::VectorXd::Ones(1)},
                              Eigen::Vector2d(1.5, 1.5), 0.0, 4.0);
  const auto coarse = brute_force_price_search(s, 0.1);
  const auto fine = brute_force_price_search(s, 0.01);
  CHECK(fine.z <= coarse.z);
  CHECK(fine.evaluations == 91 * 91);
  // analytic optimum: pi = (0.5, clipped at 0.1)
  CHECK(fine.price(0) == doctest::Approx(0.5));
  CHECK(fine.price(1) == doctest::Approx(0.1));
  CHECK(fine.z == doctest::Approx(0.43).epsilon(1e-6));
  CHECK_THROWS(brute_force_price_search(box_scenario({Eigen::MatrixXd::Zero(1, 4)}, {Eigen::VectorXd::Ones(1)},
                                                     Eigen::VectorXd::Ones(4)),
                                        0.1));
}

TEST_CASE("batch estimator enumeration") {
  std::mt19937_64 gen(8);
  const auto s = pricecoord::testing::random_box_scenario(4, 2, 5, gen);
  const PriceVector price = Eigen::VectorXd::Constant(5, 0.4);
  const auto unbiased = enumerate_batch_estimator(s, price, 2, GradientScaling::unbiased);
  CHECK(unbiased.batches == 6);
  CHECK((unbiased.mean - unbiased.full_gradient).cwiseAbs().maxCoeff() < 1e-10);
  const auto sum = enumerate_batch_estimator(s, price, 2, GradientScaling::sum);
  CHECK((sum.mean - 0.5 * sum.full_gradient).cwiseAbs().maxCoeff() < 1e-10);
  const auto all = enumerate_batch_estimator(s, price, 4, GradientScaling::unbiased);
  CHECK(all.batches == 1);
  CHECK(all.mean == all.full_gradient);
}

TEST_CASE("active-set enumeration agrees with the home solver") {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 5);
  for (int trial = 0; trial < 40; ++trial) {
    const int K = size(gen);
    BlockBuilder b("random", K);
    for (int t = 0; t < K; ++t) {
      b.add_upper(t, 1.0 + 2.0 * u(gen), "upper[" + std::to_string(t) + "]");
      b.add_lower(t, 0.0, "lower[" + std::to_string(t) + "]");
    }
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(K);
    b.add(ones, 1.0 + K * u(gen), "energy_max");
    b.add(-ones, -0.5 * u(gen), "energy_min");
    const auto poly = assemble_home_polyhedron({b.build()});
    const double c = 0.3 + u(gen);
    Eigen::MatrixXd desired(1, K);
    PriceVector price(K);
    for (int t = 0; t < K; ++t) {
      desired(0, t) = 3.0 * u(gen);
      price(t) = u(gen);
    }
    const auto dense = enumerate_kkt_qp(Eigen::VectorXd::Constant(K, 2.0 * c), price - 2.0 * c * desired.row(0).transpose(),
                                        poly.dense_matrix(), poly.rhs());
    REQUIRE(dense.found);
    const auto s = solve_home_qp(poly, Eigen::VectorXd::Constant(1, c), desired, price);
    CHECK((s.p_star - dense.x).cwiseAbs().maxCoeff() < 1e-6);
  }
}
