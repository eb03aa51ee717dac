#include "pricecoord/kernels.hpp"

#include <string>

#include "pricecoord/errors.hpp"

namespace pricecoord {

std::vector<HomeSolver> make_home_solvers(const Scenario& scenario, QpSettings settings) {
  std::vector<HomeSolver> solvers;
  solvers.reserve(scenario.homes.size());
  for (const auto& home : scenario.homes) solvers.emplace_back(home.polyhedron, home.weights, home.desired, settings);
  return solvers;
}

std::vector<PrimalDualSolution> solve_all(std::vector<HomeSolver>& solvers, const PriceVector& price,
                                          const std::vector<PrimalDualSolution>* warm, const Execution& exec) {
  const int n = static_cast<int>(solvers.size());
  if (warm != nullptr && static_cast<int>(warm->size()) != n) warm = nullptr;
  std::vector<PrimalDualSolution> out(n);
  for_each_index(n, exec, [&](int i) {
    out[i] = solvers[i].solve(price, warm != nullptr ? &(*warm)[i] : nullptr);
    if (out[i].status != QpStatus::optimal) {
      throw NumericalError("home " + std::to_string(i) + ": QP status " + to_string(out[i].status) +
                           " (worst KKT residual " + std::to_string(out[i].residuals.worst()) + ")");
    }
  });
  return out;
}

BatchContributions batch_contributions(const Scenario& scenario, const std::vector<PrimalDualSolution>& solutions,
                                       const std::vector<Eigen::VectorXd>& partials, const std::vector<int>& batch,
                                       const Execution& exec, const SensitivitySettings& settings) {
  const int b = static_cast<int>(batch.size());
  const int K = scenario.horizon();
  BatchContributions out;
  out.contributions.assign(b, Eigen::VectorXd::Zero(K));
  std::vector<char> skipped(b, 0), degenerate(b, 0);
  for_each_index(b, exec, [&](int k) {
    const int i = batch[k];
    const auto& home = scenario.homes[i];
    try {
      const auto sens = price_jacobian(solutions[i], home.polyhedron, home.weights, settings);
      degenerate[k] = sens.active.degenerate();
      out.contributions[k] = home_gradient_contribution(sens, partials[i]);
    } catch (const SingularSystemError&) {
      skipped[k] = 1;
    }
  });
  for (int k = 0; k < b; ++k) {
    if (skipped[k]) out.skipped.push_back(batch[k]);
    if (degenerate[k]) out.degenerate.push_back(batch[k]);
  }
  return out;
}

}  // namespace pricecoord
