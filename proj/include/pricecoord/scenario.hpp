#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pricecoord/appliances.hpp"
#include "pricecoord/polyhedron.hpp"

namespace pricecoord {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

/// Distributions every home is drawn from. All ranges are uniform.
struct SamplingParameters {
  // HVAC
  Range gamma1{0.02, 0.08};
  Range gamma2{0.2, 0.6};
  Range comfort_low{19.0, 21.0};
  Range comfort_high{23.0, 25.0};
  Range hvac_power{2.0, 4.0};
  /// Initial room temperature, offset from the band midpoint.
  Range initial_temp_offset{-0.5, 0.5};
  // water heater
  Range ewh_capacity{150.0, 250.0};
  Range ewh_power{3.0, 4.5};
  Range ewh_efficiency{0.9, 1.0};
  /// Initial tank level as a fraction of capacity.
  Range ewh_initial_fraction{0.6, 0.9};
  IntRange ewh_pulses{2, 4};
  Range ewh_pulse_liters{20.0, 50.0};
  double ewh_desired_temp = 50.0;
  double ewh_tap_temp = 10.0;
  double water_specific_heat = 4186.0;
  // EV
  Range ev_capacity{30.0, 60.0};
  Range ev_power{3.0, 7.0};
  Range ev_initial_fraction{0.2, 0.5};
  IntRange ev_usage_slots{2, 6};
  Range ev_trip_energy{5.0, 15.0};
  // basic appliance
  IntRange basic_window{4, 12};
  Range basic_energy{1.0, 3.0};
  Range basic_power{1.0, 2.0};
  // objective
  Range comfort_weight{0.5, 2.0};
  // weather
  double outside_mean = 10.0;
  double outside_amplitude = 5.0;
  double outside_phase = 40.0;  // slots
};

struct NeighborhoodConfig {
  int n_homes = 100;
  int horizon = 96;
  int slot_minutes = 15;
  double price_low = 0.1;
  double price_high = 1.0;
  std::uint64_t seed = 0;
  int max_attempts = 20;
  SamplingParameters sampling;

  /// Throws ConfigError.
  void validate() const;
};

/// p̄_ij(t), one row per appliance.
using DesiredSchedule = Eigen::MatrixXd;
/// c_ij, one entry per appliance.
using ComfortWeights = Eigen::VectorXd;

struct HomeScenario {
  std::vector<ApplianceSpec> appliances;
  ConstraintPolyhedron polyhedron;
  DesiredSchedule desired;
  ComfortWeights weights;
  int attempts = 1;

  int num_appliances() const { return static_cast<int>(desired.rows()); }
};

struct Scenario {
  NeighborhoodConfig config;
  Eigen::VectorXd outside_temp;
  std::vector<HomeScenario> homes;
  Eigen::VectorXd target;  // Q(t)

  int horizon() const { return static_cast<int>(outside_temp.size()); }
  int num_homes() const { return static_cast<int>(homes.size()); }
};

/// mean + amp sin(2 pi (t - phase) / K) for t = 0..K-1.
Eigen::VectorXd outside_temperature(const NeighborhoodConfig& config);

/// Preferred load of each appliance: steady-state HVAC power holding the band
/// midpoint, water-heater power replacing drawn water as fast as allowed, EV
/// charging spread evenly over the slots where it is parked, and the basic
/// appliance's energy spread over its window.
DesiredSchedule desired_schedules(const std::vector<ApplianceSpec>& appliances, const Eigen::VectorXd& outside_temp);

/// Q(t) = (sum_i sum_j sum_t p̄_ij(t)) / K for every t.
Eigen::VectorXd target_profile(const std::vector<DesiredSchedule>& desired, int horizon);

struct FeasibilityCertificate {
  bool feasible = false;
  Eigen::VectorXd point;     // feasible point, or the phase-1 point when infeasible
  double max_violation = 0.0;
  std::string row_label;     // most violated row when infeasible
};

/// Finds a feasible point of the polyhedron. A hint inside the polyhedron
/// (within 1e-7) is accepted as is, block by block. Any other block is
/// projected onto: the projection QP either returns a point of the block or
/// a certificate that the block is empty. For an empty block a phase-1 QP
/// maximizing a common slack s on the non-bound rows,
///
///   max s - mu/2 (|p|^2 + s^2)  s.t.  g_r p + |g_r| s <= h_r,  bounds hard,  s <= 1
///
/// gives the point whose most violated row is reported.
FeasibilityCertificate feasibility_certify(const ConstraintPolyhedron& polyhedron,
                                           const Eigen::VectorXd* hint = nullptr);

/// Deterministic for a fixed config. Throws InfeasibleError if a home stays
/// infeasible after config.max_attempts draws.
Scenario generate_neighborhood(const NeighborhoodConfig& config);

/// Builds a scenario from explicit appliance lists: polyhedra, desired
/// schedules and the target are derived as in generate_neighborhood. Throws
/// InfeasibleError if a home's desired schedule leaves its polyhedron.
Scenario assemble_scenario(const NeighborhoodConfig& config, const Eigen::VectorXd& outside_temp,
                           const std::vector<std::vector<ApplianceSpec>>& homes,
                           const std::vector<ComfortWeights>& weights);

/// Rebuilds polyhedra and checks the stored desired schedules.
void rebuild_polyhedra(Scenario& scenario);

std::string scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const std::string& text);
void save_scenario(const Scenario& scenario, const std::string& path);
Scenario load_scenario(const std::string& path);

}  // namespace pricecoord
