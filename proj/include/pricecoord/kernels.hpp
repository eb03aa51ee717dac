#pragma once

#include <exception>
#include <vector>

#include <Eigen/Dense>
#include <omp.h>

#include "pricecoord/home_agent.hpp"
#include "pricecoord/scenario.hpp"
#include "pricecoord/sensitivity.hpp"

namespace pricecoord {

/// serial is the reference path; parallel farms homes to OpenMP threads.
/// Both write results into per-home slots and reduce in ascending home
/// order, so their outputs are bitwise identical.
enum class ExecPolicy { serial, parallel };

struct Execution {
  ExecPolicy policy = ExecPolicy::parallel;
  int workers = 0;  // 0: OpenMP default
};

/// Runs body(i) for i in [0, n). The first exception in index order is
/// rethrown after the loop finishes.
template <typename Body>
void for_each_index(int n, const Execution& exec, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  if (exec.policy == ExecPolicy::serial) {
    for (int i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    const int threads = exec.workers > 0 ? exec.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads != 1)
    for (int i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// One reusable solver per home of the scenario.
std::vector<HomeSolver> make_home_solvers(const Scenario& scenario, QpSettings settings = {});

/// Solves every home at `price`, warm-started from `warm` when given.
/// Throws NumericalError naming the first home that is not solved to
/// optimality.
std::vector<PrimalDualSolution> solve_all(std::vector<HomeSolver>& solvers, const PriceVector& price,
                                          const std::vector<PrimalDualSolution>* warm = nullptr, const Execution& exec = {});

struct BatchContributions {
  std::vector<Eigen::VectorXd> contributions;  // one per batch entry; zero when skipped
  std::vector<int> skipped;                    // homes whose reduced KKT system was singular
  std::vector<int> degenerate;                 // homes with degenerate active rows
};

/// fp_i' dp_i*/dpi for each home in `batch`.
BatchContributions batch_contributions(const Scenario& scenario, const std::vector<PrimalDualSolution>& solutions,
                                       const std::vector<Eigen::VectorXd>& partials, const std::vector<int>& batch,
                                       const Execution& exec, const SensitivitySettings& settings = {});

}  // namespace pricecoord
