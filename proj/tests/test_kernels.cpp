#include <algorithm>
#include <stdexcept>

#include "doctest.h"
#include "pricecoord/coordinator.hpp"
#include "pricecoord/kernels.hpp"
#include "support.hpp"

using namespace pricecoord;

TEST_CASE("for_each_index rethrows the first failing index") {
  for (const auto& exec : {Execution{ExecPolicy::serial, 1}, Execution{ExecPolicy::parallel, 3}}) {
    std::vector<int> seen(10, 0);
    try {
      for_each_index(10, exec, [&](int i) {
        seen[i] = 1;
        if (i == 7) throw std::runtime_error("seven");
        if (i == 4) throw std::runtime_error("four");
      });
      FAIL("no exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "four");
    }
    CHECK(std::count(seen.begin(), seen.end(), 1) == 10);
  }
}

TEST_CASE("serial and parallel kernels agree bitwise") {
  std::mt19937_64 gen(31);
  const auto s = pricecoord::testing::random_box_scenario(12, 3, 8, gen);
  const PriceVector price = Eigen::VectorXd::LinSpaced(8, 0.1, 0.9);
  const Execution serial{ExecPolicy::serial, 1};
  const Execution parallel{ExecPolicy::parallel, 4};

  auto solvers_a = make_home_solvers(s);
  auto solvers_b = make_home_solvers(s);
  const auto a = solve_all(solvers_a, price, nullptr, serial);
  const auto b = solve_all(solvers_b, price, nullptr, parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].p_star == b[i].p_star);
    CHECK(a[i].lambda_star == b[i].lambda_star);
  }

  const auto partials = coordinator_partial_fp(s, schedules_of(a));
  const std::vector<int> batch{0, 2, 3, 7, 11};
  const auto ca = batch_contributions(s, a, partials, batch, serial);
  const auto cb = batch_contributions(s, b, partials, batch, parallel);
  REQUIRE(ca.contributions.size() == cb.contributions.size());
  for (std::size_t k = 0; k < ca.contributions.size(); ++k) CHECK(ca.contributions[k] == cb.contributions[k]);
  CHECK(ca.skipped == cb.skipped);
  CHECK(ca.degenerate == cb.degenerate);
}

TEST_CASE("warm solves reproduce cold solves") {
  std::mt19937_64 gen(5);
  const auto s = pricecoord::testing::random_box_scenario(4, 2, 6, gen);
  auto solvers = make_home_solvers(s);
  const PriceVector p1 = Eigen::VectorXd::Constant(6, 0.3);
  const PriceVector p2 = Eigen::VectorXd::LinSpaced(6, 0.2, 0.8);
  const auto first = solve_all(solvers, p1);
  const auto warm = solve_all(solvers, p2, &first);
  auto fresh = make_home_solvers(s);
  const auto cold = solve_all(fresh, p2);
  for (std::size_t i = 0; i < warm.size(); ++i) CHECK((warm[i].p_star - cold[i].p_star).norm() < 1e-7);
}
