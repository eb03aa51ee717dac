#include "pricecoord/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "pricecoord/errors.hpp"
#include "pricecoord/kernels.hpp"
#include "pricecoord/sensitivity.hpp"

namespace pricecoord {

namespace {

double cold_objective(const Scenario& scenario, const PriceVector& price) {
  Schedules schedules;
  schedules.reserve(scenario.homes.size());
  for (std::size_t i = 0; i < scenario.homes.size(); ++i) {
    const auto& home = scenario.homes[i];
    const auto s = solve_home_qp(home.polyhedron, home.weights, home.desired, price);
    if (s.status != QpStatus::optimal) throw NumericalError("oracle: home " + std::to_string(i) + " not solved");
    schedules.push_back(s.p_star);
  }
  return coordinator_objective(scenario, schedules);
}

std::vector<Eigen::VectorXd> all_contributions(const Scenario& scenario, const PriceVector& price, const Execution& exec) {
  auto solvers = make_home_solvers(scenario);
  const auto solutions = solve_all(solvers, price, nullptr, exec);
  const Schedules partials = coordinator_partial_fp(scenario, schedules_of(solutions));
  std::vector<int> everyone(scenario.num_homes());
  for (int i = 0; i < scenario.num_homes(); ++i) everyone[i] = i;
  auto batch = batch_contributions(scenario, solutions, partials, everyone, exec);
  if (!batch.skipped.empty()) {
    throw SingularSystemError("home " + std::to_string(batch.skipped.front()) + " has a singular reduced KKT system");
  }
  return std::move(batch.contributions);
}

}  // namespace

Eigen::VectorXd finite_difference_gradient(const Scenario& scenario, const PriceVector& price, const FdConfig& fd,
                                           const Execution& exec) {
  if (!(fd.step > 0.0)) throw std::invalid_argument("finite differences need a positive step");
  const int K = scenario.horizon();
  Eigen::VectorXd g(K);
  for_each_index(K, exec, [&](int t) {
    PriceVector up = price, down = price;
    up(t) += fd.step;
    down(t) -= fd.step;
    g(t) = (cold_objective(scenario, up) - cold_objective(scenario, down)) / (2.0 * fd.step);
  });
  return g;
}

Eigen::VectorXd implicit_gradient(const Scenario& scenario, const PriceVector& price, const Execution& exec) {
  const auto contributions = all_contributions(scenario, price, exec);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(scenario.horizon());
  for (const auto& c : contributions) g += c;
  return g;
}

ScalarQpSolution scalar_qp_closed_form(double c, double desired, double price, double lo, double hi) {
  if (!(c > 0.0) || lo > hi) throw std::invalid_argument("scalar QP needs c > 0 and lo <= hi");
  ScalarQpSolution s;
  s.p = std::clamp(desired - price / (2.0 * c), lo, hi);
  const double gradient = 2.0 * c * (s.p - desired) + price;
  // Stationarity: gradient - lambda_low + lambda_high = 0.
  if (s.p == lo && gradient > 0.0) s.lambda_low = gradient;
  if (s.p == hi && gradient < 0.0) s.lambda_high = -gradient;
  return s;
}

Scenario desk_toy_scenario() {
  NeighborhoodConfig config;
  config.n_homes = 1;
  config.horizon = 2;
  Eigen::VectorXd outside(2);
  outside << 12.0, 14.0;
  HvacSpec hvac;
  hvac.gamma1 = 0.2;
  hvac.gamma2 = 0.5;
  hvac.t_low = 19.0;
  hvac.t_upper = 23.0;
  hvac.t_init = 21.0;
  hvac.nominal_power = 8.0;
  BasicApplianceSpec basic;
  basic.window_start = 0;
  basic.window_end = 1;
  basic.total_energy = 2.0;
  basic.max_power = 2.0;
  return assemble_scenario(config, outside, {{hvac, basic}}, {Eigen::Vector2d(1.0, 0.25)});
}

PriceSearchResult brute_force_price_search(const Scenario& scenario, double grid_step) {
  const int K = scenario.horizon();
  if (K > 3) throw std::invalid_argument("brute-force search is limited to K <= 3");
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid step must be positive");
  const double low = scenario.config.price_low;
  const double high = scenario.config.price_high;
  const long per_slot = static_cast<long>(std::floor((high - low) / grid_step + 1e-9)) + 1;
  if (std::pow(static_cast<double>(per_slot), K) > 1e6) throw std::invalid_argument("price grid exceeds 1e6 points");

  std::vector<HomeSolver> solvers = make_home_solvers(scenario);
  PriceSearchResult best;
  best.z = std::numeric_limits<double>::infinity();
  std::vector<long> index(K, 0);
  PriceVector price(K);
  while (true) {
    for (int t = 0; t < K; ++t) price(t) = std::min(high, low + index[t] * grid_step);
    Schedules schedules;
    for (std::size_t i = 0; i < solvers.size(); ++i) {
      const auto s = solvers[i].solve(price);
      if (s.status != QpStatus::optimal) throw NumericalError("oracle: home " + std::to_string(i) + " not solved");
      schedules.push_back(s.p_star);
    }
    const double z = coordinator_objective(scenario, schedules);
    ++best.evaluations;
    // Strict improvement keeps the first, lexicographically smallest, minimizer.
    if (z < best.z) {
      best.z = z;
      best.price = price;
    }
    int t = K - 1;
    while (t >= 0 && ++index[t] == per_slot) index[t--] = 0;
    if (t < 0) break;
  }
  return best;
}

BatchEnumeration enumerate_batch_estimator(const Scenario& scenario, const PriceVector& price, int batch_size,
                                           GradientScaling scaling) {
  const int N = scenario.num_homes();
  if (batch_size < 1 || batch_size > N) throw std::invalid_argument("enumeration needs 1 <= B <= N");
  double count = 1.0;
  for (int k = 0; k < batch_size; ++k) count = count * (N - k) / (k + 1);
  if (count > 1e4) throw std::invalid_argument("more than 1e4 batches to enumerate");

  const auto contributions = all_contributions(scenario, price, Execution{ExecPolicy::serial, 1});
  BatchEnumeration out;
  out.full_gradient = Eigen::VectorXd::Zero(scenario.horizon());
  for (const auto& c : contributions) out.full_gradient += c;
  out.mean = Eigen::VectorXd::Zero(scenario.horizon());

  std::vector<int> pick(batch_size);
  for (int k = 0; k < batch_size; ++k) pick[k] = k;
  while (true) {
    std::vector<Eigen::VectorXd> chosen;
    for (int i : pick) chosen.push_back(contributions[i]);
    out.mean += estimate_gradient(chosen, N, batch_size, scaling);
    ++out.batches;
    int k = batch_size - 1;
    while (k >= 0 && pick[k] == N - batch_size + k) --k;
    if (k < 0) break;
    ++pick[k];
    for (int r = k + 1; r < batch_size; ++r) pick[r] = pick[r - 1] + 1;
  }
  out.mean /= static_cast<double>(out.batches);
  return out;
}

DenseQpSolution enumerate_kkt_qp(const Eigen::VectorXd& hessian_diag, const Eigen::VectorXd& linear,
                                 const Eigen::MatrixXd& G, const Eigen::VectorXd& h, double tolerance) {
  const int n = static_cast<int>(hessian_diag.size());
  const int m = static_cast<int>(h.size());
  if (n > 10 || m > 16) throw std::invalid_argument("enumeration oracle is limited to 10 variables and 16 rows");

  DenseQpSolution out;
  std::vector<int> active;
  // Tries every subset of `size` rows drawn from [from, m).
  std::function<bool(int, int)> visit = [&](int from, int size) -> bool {
    if (static_cast<int>(active.size()) == size) {
      const int a = size;
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + a, n + a);
      Eigen::VectorXd rhs(n + a);
      kkt.topLeftCorner(n, n).diagonal() = hessian_diag;
      rhs.head(n) = -linear;
      for (int k = 0; k < a; ++k) {
        kkt.block(n + k, 0, 1, n) = G.row(active[k]);
        kkt.block(0, n + k, n, 1) = G.row(active[k]).transpose();
        rhs(n + k) = h(active[k]);
      }
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (!lu.isInvertible()) return false;
      const Eigen::VectorXd sol = lu.solve(rhs);
      const Eigen::VectorXd x = sol.head(n);
      if (m > 0 && (G * x - h).maxCoeff() > tolerance) return false;
      if (a > 0 && sol.tail(a).minCoeff() < -tolerance) return false;
      out.found = true;
      out.x = x;
      out.lambda = Eigen::VectorXd::Zero(m);
      for (int k = 0; k < a; ++k) out.lambda(active[k]) = std::max(0.0, sol(n + k));
      out.active = active;
      return true;
    }
    for (int r = from; r < m; ++r) {
      active.push_back(r);
      if (visit(r + 1, size)) return true;
      active.pop_back();
    }
    return false;
  };
  for (int size = 0; size <= std::min(n, m); ++size) {
    active.clear();
    if (visit(0, size)) return out;
  }
  return out;
}

}  // namespace pricecoord
