#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pricecoord/scenario.hpp"

namespace pricecoord::testing {

/// One appliance bounded by lo <= p(t) <= hi in every slot.
inline ConstraintBlock box_block(int horizon, double lo, double hi) {
  BlockBuilder b("box", horizon);
  for (int t = 0; t < horizon; ++t) {
    b.add_upper(t, hi, "upper[t=" + std::to_string(t) + "]");
    b.add_lower(t, lo, "lower[t=" + std::to_string(t) + "]");
  }
  return b.build();
}

/// Homes made of box appliances. desired[i] is home i's (M x K) schedule and
/// weights[i] its comfort weights; the target is given explicitly.
inline Scenario box_scenario(const std::vector<Eigen::MatrixXd>& desired, const std::vector<Eigen::VectorXd>& weights,
                             const Eigen::VectorXd& target, double lo = 0.0, double hi = 10.0) {
  Scenario s;
  const int K = static_cast<int>(target.size());
  s.config.n_homes = static_cast<int>(desired.size());
  s.config.horizon = K;
  s.outside_temp = Eigen::VectorXd::Zero(K);
  s.target = target;
  for (std::size_t i = 0; i < desired.size(); ++i) {
    HomeScenario home;
    std::vector<ConstraintBlock> blocks;
    for (Eigen::Index j = 0; j < desired[i].rows(); ++j) blocks.push_back(box_block(K, lo, hi));
    home.polyhedron = assemble_home_polyhedron(std::move(blocks));
    home.desired = desired[i];
    home.weights = weights[i];
    s.homes.push_back(std::move(home));
  }
  return s;
}

/// Random box scenario: N homes with M appliances each.
template <typename Gen>
Scenario random_box_scenario(int n_homes, int appliances, int horizon, Gen& gen) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::MatrixXd> desired;
  std::vector<Eigen::VectorXd> weights;
  double total = 0.0;
  for (int i = 0; i < n_homes; ++i) {
    Eigen::MatrixXd d(appliances, horizon);
    for (int j = 0; j < appliances; ++j) {
      for (int t = 0; t < horizon; ++t) d(j, t) = 3.0 * unit(gen);
    }
    Eigen::VectorXd w(appliances);
    for (int j = 0; j < appliances; ++j) w(j) = 0.5 + 1.5 * unit(gen);
    total += d.sum();
    desired.push_back(d);
    weights.push_back(w);
  }
  return box_scenario(desired, weights, Eigen::VectorXd::Constant(horizon, total / horizon), 0.0, 4.0);
}

}  // namespace pricecoord::testing
