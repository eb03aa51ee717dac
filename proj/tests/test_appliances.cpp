#include <random>

#include "doctest.h"
#include "pricecoord/appliances.hpp"
#include "pricecoord/errors.hpp"

using namespace pricecoord;

namespace {

bool satisfies(const ConstraintBlock& b, const Eigen::VectorXd& p, double tol = 1e-9) {
  return ((b.matrix * p - b.rhs).array() <= tol).all();
}

HvacSpec example_hvac() {
  HvacSpec s;
  s.gamma1 = 0.1;
  s.gamma2 = 0.5;
  s.t_init = 20.0;
  s.t_low = 15.0;
  s.t_upper = 25.0;
  s.nominal_power = 2.0;
  return s;
}

// 1 kW over one slot heats 10 liters.
EwhSpec ten_liter_ewh(int K) {
  EwhSpec s;
  s.efficiency = 1.0;
  s.desired_temp = 50.0;
  s.tap_temp = 10.0;
  s.specific_heat = 900.0 * 1000.0 / (10.0 * 40.0);
  s.capacity = 100.0;
  s.max_power = 2.0;
  s.init_level = 50.0;
  s.demand.assign(K, 0.0);
  return s;
}

}  // namespace

TEST_CASE("hvac closed form matches the hand recursion") {
  const auto spec = example_hvac();
  const Eigen::VectorXd out = Eigen::VectorXd::Constant(4, 10.0);
  const auto form = hvac_closed_form(spec, out);
  CHECK(form.constant(0) == doctest::Approx(19.0).epsilon(1e-12));
  CHECK(form.power_coefficients(0, 0) == doctest::Approx(0.5));
  Eigen::VectorXd p = Eigen::VectorXd::Zero(4);
  p(0) = 1.0;
  CHECK(hvac_temperature_trajectory(spec, p, out)(0) == doctest::Approx(19.5).epsilon(1e-12));
  CHECK((form.power_coefficients * p + form.constant)(0) == doctest::Approx(19.5).epsilon(1e-12));

  // t = 3 weights on p(0), p(1), p(2)
  CHECK(form.power_coefficients(2, 0) == doctest::Approx(0.81 * 0.5));
  CHECK(form.power_coefficients(2, 1) == doctest::Approx(0.9 * 0.5));
  CHECK(form.power_coefficients(2, 2) == doctest::Approx(0.5));
  CHECK(form.power_coefficients(2, 3) == 0.0);
}

TEST_CASE("hvac fixed points") {
  auto spec = example_hvac();
  spec.gamma1 = 0.37;
  const Eigen::VectorXd out = Eigen::VectorXd::Constant(6, spec.t_init);
  const Eigen::VectorXd t = hvac_temperature_trajectory(spec, Eigen::VectorXd::Zero(6), out);
  for (int i = 0; i < 6; ++i) CHECK(t(i) == doctest::Approx(spec.t_init).epsilon(1e-14));

  spec.gamma1 = 1.0;
  Eigen::VectorXd varying(5);
  varying << 3.0, 7.0, -1.0, 12.0, 4.0;
  const Eigen::VectorXd mixed = hvac_temperature_trajectory(spec, Eigen::VectorXd::Zero(5), varying);
  for (int i = 0; i < 5; ++i) CHECK(mixed(i) == doctest::Approx(varying(i)));
}

TEST_CASE("hvac closed form equals recursion on random cases") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    HvacSpec s;
    s.gamma1 = 0.01 + 0.98 * u(rng);
    s.gamma2 = 0.1 + u(rng);
    s.t_low = 15.0 + 5.0 * u(rng);
    s.t_upper = s.t_low + 1.0 + 6.0 * u(rng);
    s.t_init = s.t_low + (s.t_upper - s.t_low) * u(rng);
    s.mode = u(rng) < 0.5 ? HvacMode::heating : HvacMode::cooling;
    const int K = 1 + static_cast<int>(30 * u(rng));
    Eigen::VectorXd out(K), p(K);
    for (int t = 0; t < K; ++t) {
      out(t) = -5.0 + 40.0 * u(rng);
      p(t) = 4.0 * u(rng);
    }
    const auto form = hvac_closed_form(s, out);
    const Eigen::VectorXd diff = form.power_coefficients * p + form.constant - hvac_temperature_trajectory(s, p, out);
    worst = std::max(worst, diff.lpNorm<Eigen::Infinity>());
    const double sign = s.mode == HvacMode::heating ? 1.0 : -1.0;
    CHECK(((sign * form.power_coefficients).array() >= 0.0).all());
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("hvac block encodes the comfort band and power box") {
  const auto spec = example_hvac();
  const Eigen::VectorXd out = Eigen::VectorXd::Constant(4, 10.0);
  const auto b = build_hvac_block(spec, out);
  CHECK(b.rows() == 16);
  CHECK(b.horizon() == 4);
  CHECK(b.labels.front() == "temp_max[t=1]");
  CHECK(satisfies(b, Eigen::VectorXd::Zero(4)));
  CHECK_FALSE(satisfies(b, Eigen::VectorXd::Constant(4, 3.0)));

  auto cold = spec;
  cold.t_low = 19.9;
  cold.t_upper = 30.0;
  cold.nominal_power = 0.1;
  CHECK_THROWS_AS(build_hvac_block(cold, out), InfeasibleError);
  try {
    build_hvac_block(cold, out);
  } catch (const InfeasibleError& e) {
    CHECK(e.row_label() == "hvac/temp_min[t=1]");
  }
}

TEST_CASE("ewh levels and rows") {
  auto s = ten_liter_ewh(4);
  CHECK(s.liters_per_kw_slot() == doctest::Approx(10.0));
  const auto level = ewh_level_trajectory(s, Eigen::VectorXd::Zero(4));
  for (int t = 0; t <= 4; ++t) CHECK(level(t) == doctest::Approx(50.0));
  const auto b = build_ewh_block(s);
  const Eigen::VectorXd slack = b.rhs - b.matrix * Eigen::VectorXd::Zero(4);
  for (int r = 0; r < b.rows(); ++r) {
    if (b.labels[r].rfind("power_min", 0) != 0) CHECK(slack(r) > 0.0);
  }

  s.demand[0] = 20.0;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(4);
  p(0) = 1.0;
  CHECK(ewh_level_trajectory(s, p)(1) == doctest::Approx(40.0));

  auto greedy = ten_liter_ewh(3);
  greedy.init_level = 0.0;
  greedy.capacity = 100.0;
  greedy.demand = {0.0, 0.0, 70.0};
  greedy.max_power = 3.0;  // two slots give 60 L < 70 L
  CHECK_THROWS_AS(build_ewh_block(greedy), InfeasibleError);
  greedy.max_power = 4.0;
  CHECK_NOTHROW(build_ewh_block(greedy));
}

TEST_CASE("ev rows") {
  EvSpec full;
  full.capacity = 30.0;
  full.init_charge = 30.0;
  full.max_power = 5.0;
  full.demand.assign(6, 0.0);
  const auto b = build_ev_block(full);
  CHECK(satisfies(b, Eigen::VectorXd::Zero(6)));
  CHECK((b.matrix * Eigen::VectorXd::Zero(6) - b.rhs)(0) == doctest::Approx(0.0));

  EvSpec empty;
  empty.capacity = 10.0;
  empty.init_charge = 0.0;
  empty.max_power = 0.5;
  empty.demand.assign(8, 0.0);
  empty.demand[5] = 2.0;
  const auto e = build_ev_block(empty);
  Eigen::VectorXd charge = Eigen::VectorXd::Zero(8);
  charge.head(5).setConstant(0.5);
  CHECK(satisfies(e, charge));
  CHECK_FALSE(satisfies(e, Eigen::VectorXd::Zero(8)));

  empty.max_power = 0.3;
  CHECK_THROWS_AS(build_ev_block(empty), InfeasibleError);

  // Charging during an in-use slot violates the pinning rows.
  empty.max_power = 1.0;
  const auto pinned = build_ev_block(empty);
  Eigen::VectorXd ok = Eigen::VectorXd::Zero(8);
  ok.head(3).setConstant(1.0);
  CHECK(satisfies(pinned, ok));
  ok(5) = 0.01;
  CHECK_FALSE(satisfies(pinned, ok));
}

TEST_CASE("basic appliance rows") {
  BasicApplianceSpec s{4, 7, 2.0, 1.0};
  const auto b = build_basic_block(s, 10);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(10);
  p.segment(4, 4).setConstant(0.5);
  CHECK(satisfies(b, p));
  p(0) = 0.1;
  CHECK_FALSE(satisfies(b, p));

  BasicApplianceSpec zero{4, 7, 0.0, 1.0};
  const auto z = build_basic_block(zero, 10);
  CHECK(satisfies(z, Eigen::VectorXd::Zero(10)));
  Eigen::VectorXd bump = Eigen::VectorXd::Zero(10);
  bump(5) = 1e-3;
  CHECK_FALSE(satisfies(z, bump));

  BasicApplianceSpec tight{3, 4, 3.0, 1.0};
  CHECK_THROWS_AS(build_basic_block(tight, 10), InfeasibleError);
}

TEST_CASE("polyhedron assembly") {
  const auto a = build_basic_block({1, 2, 1.0, 1.0}, 5);
  const auto b = build_hvac_block(example_hvac(), Eigen::VectorXd::Constant(5, 10.0));
  const auto poly = assemble_home_polyhedron({a, b});
  CHECK(poly.num_rows() == a.rows() + b.rows());
  CHECK(poly.num_variables() == 10);
  const Eigen::MatrixXd G = poly.dense_matrix();
  for (int r = 0; r < poly.num_rows(); ++r) {
    const auto origin = poly.locate(r);
    const int begin = poly.range(origin.block).col_begin;
    for (int c = 0; c < 10; ++c) {
      if (c < begin || c >= begin + 5) CHECK(G(r, c) == 0.0);
    }
    const auto& blk = poly.block(origin.block);
    CHECK(poly.label(r) == blk.appliance + "/" + blk.labels[origin.local_row]);
  }
  CHECK(poly.column(1, 3) == 8);
}
