#include <benchmark/benchmark.h>

#include "pricecoord/coordinator.hpp"
#include "pricecoord/kernels.hpp"

using namespace pricecoord;

namespace {

const Scenario& scenario() {
  static const Scenario s = [] {
    NeighborhoodConfig c;
    c.n_homes = 100;
    c.seed = 1;
    return generate_neighborhood(c);
  }();
  return s;
}

Execution policy(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution{ExecPolicy::serial, 1} : Execution{ExecPolicy::parallel, 0};
}

void BM_SolveAllCold(benchmark::State& state) {
  const auto& s = scenario();
  const PriceVector price = Eigen::VectorXd::Constant(s.horizon(), 0.5);
  const auto exec = policy(state);
  for (auto _ : state) {
    auto solvers = make_home_solvers(s);
    benchmark::DoNotOptimize(solve_all(solvers, price, nullptr, exec));
  }
}

void BM_SolveAllWarm(benchmark::State& state) {
  const auto& s = scenario();
  const PriceVector price = Eigen::VectorXd::Constant(s.horizon(), 0.5);
  PriceVector moved = price;
  moved(10) += 0.05;
  const auto exec = policy(state);
  auto solvers = make_home_solvers(s);
  const auto start = solve_all(solvers, price, nullptr, exec);
  for (auto _ : state) benchmark::DoNotOptimize(solve_all(solvers, moved, &start, exec));
}

void BM_BatchContributions(benchmark::State& state) {
  const auto& s = scenario();
  const PriceVector price = Eigen::VectorXd::Constant(s.horizon(), 0.5);
  auto solvers = make_home_solvers(s);
  const auto solutions = solve_all(solvers, price);
  const auto partials = coordinator_partial_fp(s, schedules_of(solutions));
  std::vector<int> batch;
  for (int i = 0; i < 25; ++i) batch.push_back(4 * i);
  const auto exec = policy(state);
  for (auto _ : state) benchmark::DoNotOptimize(batch_contributions(s, solutions, partials, batch, exec));
}

}  // namespace

// Argument 0: serial reference path, 1: OpenMP.
BENCHMARK(BM_SolveAllCold)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveAllWarm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchContributions)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
