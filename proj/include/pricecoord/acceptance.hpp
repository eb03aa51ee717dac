#pragma once

#include <cstdint>
#include <string>

namespace pricecoord {

struct CheckResult {
  std::string id;
  std::string name;
  bool pass = false;
  double value = 0.0;      // the quantity compared against the tolerance
  double tolerance = 0.0;
  std::string detail;
  double seconds = 0.0;
};

/// "[PASS] id name: detail (value <= tolerance, seconds)"
std::string format_check(const CheckResult& check);

/// Implicit vs central-difference gradients on random generated scenarios
/// (N=3, K=8). Scenarios with a degenerate home are excluded and counted.
CheckResult check_gradient_fidelity(int scenarios, std::uint64_t seed);

/// Average of the unbiased estimator over all C(4, 2) batches against the
/// full gradient on a generated 4-home scenario.
CheckResult check_unbiased_estimator(std::uint64_t seed);

/// Scalar closed form vs the home solver on interior, clipped and boundary
/// cases.
CheckResult check_scalar_closed_form();

/// Home solver vs active-set enumeration on random instances with at most
/// 10 variables.
CheckResult check_dense_active_set(int instances, std::uint64_t seed);

/// Worst KKT residual over every home of a default scenario at a random price.
CheckResult check_scenario_kkt(std::uint64_t seed);

/// Closed-form HVAC temperatures vs the recursion on random cases.
CheckResult check_hvac_closed_form(int cases, std::uint64_t seed);

/// Optimized schedules of a default scenario simulated forward against the
/// comfort band, tank, battery and window-energy limits.
CheckResult check_schedule_simulation(std::uint64_t seed);

/// run_coordination on the desk toy against the 0.01-grid optimum, over
/// `seeds` coordinator seeds.
CheckResult check_desk_scale_optimality(int seeds);

/// Default 100-home runs: optimized aggregate RMS vs desired aggregate RMS
/// around Q, and final vs initial objective.
CheckResult check_load_shaping(int seeds);

/// 100 homes, K=96, B=25, Adam: k_max=50 iterations within `budget_s`.
CheckResult check_runtime_envelope(double budget_s);

/// Byte comparison of run CSVs across repeated runs and worker counts.
/// Writes into `scratch_dir`.
CheckResult check_determinism(const std::string& scratch_dir);

}  // namespace pricecoord
