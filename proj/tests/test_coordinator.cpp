#include <cmath>
#include <map>

#include "doctest.h"
#include "pricecoord/coordinator.hpp"
#include "pricecoord/errors.hpp"
#include "support.hpp"

using namespace pricecoord;
using pricecoord::testing::box_scenario;

namespace {

Scenario one_slot_scenario() {
  return box_scenario({Eigen::MatrixXd::Ones(1, 1)}, {Eigen::VectorXd::Ones(1)}, Eigen::VectorXd::Ones(1));
}

Scenario small_scenario(int n_homes, int horizon, unsigned seed) {
  std::mt19937_64 gen(seed);
  return pricecoord::testing::random_box_scenario(n_homes, 2, horizon, gen);
}

}  // namespace

TEST_CASE("coordinator objective") {
  const auto s = one_slot_scenario();
  const Schedules p{Eigen::VectorXd::Constant(1, 0.9)};
  CHECK(coordinator_objective(s, p) == doctest::Approx(0.02).epsilon(1e-12));

  // a home with p = pbar = 0 changes neither term
  auto bigger = box_scenario({Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Zero(1, 1)},
                             {Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 3.0)}, Eigen::VectorXd::Ones(1));
  CHECK(coordinator_objective(bigger, {p[0], Eigen::VectorXd::Zero(1)}) == doctest::Approx(0.02).epsilon(1e-12));

  const Schedules two{Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(0.5, 0.5)};
  const Eigen::VectorXd load = aggregate_load(two, 1);
  CHECK(load(0) == 4.0);
  CHECK(aggregate_load(two, 2).isApprox(Eigen::Vector2d(1.5, 2.5)));
}

TEST_CASE("coordinator partial derivatives") {
  const auto s = one_slot_scenario();
  const auto fp = coordinator_partial_fp(s, {Eigen::VectorXd::Constant(1, 0.9)});
  CHECK(fp[0](0) == doctest::Approx(-0.4).epsilon(1e-12));

  // schedules at the desired point whose aggregate equals Q
  const auto at_desired = coordinator_partial_fp(s, {Eigen::VectorXd::Ones(1)});
  CHECK(at_desired[0].norm() == 0.0);

  // finite differences in p
  const auto r = small_scenario(3, 4, 7);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> unit(0.0, 3.0);
  Schedules p;
  for (const auto& home : r.homes) {
    Eigen::VectorXd x(home.polyhedron.num_variables());
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = unit(gen);
    p.push_back(x);
  }
  const auto analytic = coordinator_partial_fp(r, p);
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (Eigen::Index k = 0; k < p[i].size(); ++k) {
      Schedules up = p, down = p;
      up[i](k) += h;
      down[i](k) -= h;
      const double fd = (coordinator_objective(r, up) - coordinator_objective(r, down)) / (2 * h);
      CHECK(std::abs(fd - analytic[i](k)) < 1e-6);
    }
  }
}

TEST_CASE("batch sampling") {
  Rng rng(5);
  const auto all = sample_batch(7, 7, rng);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6});

  for (int trial = 0; trial < 200; ++trial) {
    const auto b = sample_batch(20, 6, rng);
    REQUIRE(b.size() == 6);
    for (std::size_t k = 1; k < b.size(); ++k) CHECK(b[k - 1] < b[k]);
    CHECK(b.front() >= 0);
    CHECK(b.back() < 20);
  }

  // B = 1 marginal: chi-square with 9 degrees of freedom
  const int n = 10, draws = 100000;
  std::vector<int> counts(n, 0);
  for (int k = 0; k < draws; ++k) ++counts[sample_batch(n, 1, rng)[0]];
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / n;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // mean 9, sd sqrt(18): 3 sigma
  CHECK(chi2 < 9.0 + 3.0 * std::sqrt(18.0));

  // same state, same draws
  Rng a(99), b(99);
  for (int k = 0; k < 50; ++k) CHECK(sample_batch(30, 5, a) == sample_batch(30, 5, b));

  CHECK_THROWS(sample_batch(3, 0, rng));
  CHECK_THROWS(sample_batch(3, 4, rng));
}

TEST_CASE("gradient estimate scaling") {
  const std::vector<Eigen::VectorXd> c{Eigen::Vector2d(1.0, -2.0), Eigen::Vector2d(0.5, 0.5)};
  CHECK(estimate_gradient(c, 2, 2, GradientScaling::sum).isApprox(Eigen::Vector2d(1.5, -1.5)));
  CHECK(estimate_gradient(c, 2, 2, GradientScaling::unbiased).isApprox(Eigen::Vector2d(1.5, -1.5)));
  CHECK(estimate_gradient(c, 8, 2, GradientScaling::unbiased).isApprox(Eigen::Vector2d(6.0, -6.0)));
  const std::vector<Eigen::VectorXd> zero{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  CHECK(estimate_gradient(zero, 9, 2, GradientScaling::unbiased).norm() == 0.0);
}

TEST_CASE("adam step") {
  CoordinatorConfig config;
  config.learning_rate = 0.1;
  OptimizerState state;
  const PriceVector price = Eigen::Vector3d(0.5, 0.5, 0.5);
  const Eigen::VectorXd g = Eigen::Vector3d(3.0, -0.02, 100.0);
  const PriceVector next = adam_step(state, g, price, config);
  CHECK(next(0) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(next(1) == doctest::Approx(0.6).epsilon(1e-5));
  CHECK(next(2) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(state.step == 1);

  // constant gradient keeps the step at alpha
  PriceVector p = price;
  OptimizerState s2;
  for (int k = 0; k < 5; ++k) {
    const PriceVector q = adam_step(s2, Eigen::Vector3d::Constant(2.0), p, config);
    CHECK((p - q).cwiseAbs().maxCoeff() == doctest::Approx(0.1).epsilon(1e-6));
    p = q;
  }

  OptimizerState s3;
  PriceVector fixed = price;
  for (int k = 0; k < 10; ++k) fixed = adam_step(s3, Eigen::Vector3d::Zero(), fixed, config);
  CHECK(fixed == price);
}

TEST_CASE("scaled sgd step") {
  OptimizerState state;
  const Eigen::VectorXd g = Eigen::Vector2d(1.0, -2.0);
  PriceVector p = Eigen::Vector2d::Zero();
  p = scaled_sgd_step(state, g, p, 0.1);
  CHECK(p.isApprox(Eigen::Vector2d(-0.1, 0.2)));

  OptimizerState at_four;
  at_four.step = 3;
  const PriceVector q = scaled_sgd_step(at_four, g, Eigen::Vector2d::Zero(), 0.1);
  CHECK(q.isApprox(Eigen::Vector2d(-0.05, 0.1)));

  OptimizerState cumulative;
  PriceVector x = Eigen::Vector2d::Zero();
  double partial = 0.0;
  for (int k = 1; k <= 20; ++k) {
    x = scaled_sgd_step(cumulative, g, x, 0.1);
    partial += 1.0 / std::sqrt(static_cast<double>(k));
  }
  CHECK(x(0) == doctest::Approx(-0.1 * partial).epsilon(1e-12));
  CHECK(x(1) == doctest::Approx(0.2 * partial).epsilon(1e-12));
}

TEST_CASE("price projection") {
  const PriceBox box{0.1, 1.0};
  const PriceVector p = project_price(Eigen::Vector3d(1.3, 0.05, 0.42), box);
  CHECK(p(0) == 1.0);
  CHECK(p(1) == 0.1);
  CHECK(p(2) == 0.42);
}

TEST_CASE("config validation") {
  CoordinatorConfig c;
  c.batch_size = 5;
  CHECK_THROWS_AS(c.validate(4), ConfigError);
  CHECK_NOTHROW(c.validate(5));
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(5), ConfigError);
  c = CoordinatorConfig{};
  c.batch_size = 1;
  c.k_max = 0;
  CHECK_THROWS_AS(c.validate(5), ConfigError);
}

TEST_CASE("infinite epsilon stops after one iteration") {
  const auto s = small_scenario(4, 3, 1);
  CoordinatorConfig c;
  c.batch_size = 2;
  c.epsilon = std::numeric_limits<double>::infinity();
  c.seed = 3;
  const auto r = run_coordination(s, c);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.stop == StopReason::converged);
  CHECK(r.final_z() == doctest::Approx(evaluate_price(s, r.final_price)).epsilon(1e-9));
}

TEST_CASE("coordination run bookkeeping") {
  const auto s = small_scenario(6, 5, 2);
  CoordinatorConfig c;
  c.batch_size = 3;
  c.k_max = 30;
  c.epsilon = 1e-4;
  c.seed = 17;
  const auto r = run_coordination(s, c);
  REQUIRE(!r.trace.empty());
  CHECK((r.initial_price.array() >= 0.1).all());
  CHECK((r.initial_price.array() <= 1.0).all());
  CHECK((r.final_price.array() >= 0.1).all());
  CHECK((r.final_price.array() <= 1.0).all());
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    CHECK(r.trace[k].k == static_cast<int>(k) + 1);
    CHECK(r.trace[k].batch.size() == 3);
  }
  if (r.stop == StopReason::converged && r.trace.size() >= 2) {
    const double a = r.trace[r.trace.size() - 2].z, b = r.trace.back().z;
    CHECK(std::abs(b - a) / a <= c.epsilon);
  } else {
    CHECK(r.trace.size() == 30);
  }
}

TEST_CASE("coordination is deterministic across worker counts") {
  const auto s = small_scenario(8, 6, 3);
  CoordinatorConfig c;
  c.batch_size = 3;
  c.k_max = 10;
  c.epsilon = 1e-12;
  c.seed = 8;
  c.execution = {ExecPolicy::serial, 1};
  const auto a = run_coordination(s, c);
  c.execution = {ExecPolicy::parallel, 3};
  const auto b = run_coordination(s, c);
  c.execution = {ExecPolicy::parallel, 1};
  const auto d = run_coordination(s, c);
  REQUIRE(a.trace.size() == b.trace.size());
  REQUIRE(a.trace.size() == d.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].z == b.trace[k].z);
    CHECK(a.trace[k].z == d.trace[k].z);
    CHECK(a.trace[k].batch == b.trace[k].batch);
  }
  CHECK(a.final_price == b.final_price);
}

TEST_CASE("small steps with the full batch decrease z") {
  const auto s = small_scenario(5, 4, 4);
  CoordinatorConfig c;
  c.batch_size = 5;
  c.optimizer = OptimizerKind::scaled_sgd;
  c.learning_rate = 1e-3;
  c.k_max = 20;
  c.epsilon = 1e-14;
  c.seed = 21;
  const auto r = run_coordination(s, c);
  int decreases = 0;
  double prev = r.z_initial;
  for (const auto& rec : r.trace) {
    if (rec.z <= prev + 1e-12) ++decreases;
    prev = rec.z;
  }
  CHECK(decreases >= static_cast<int>(0.9 * r.trace.size()));
}
