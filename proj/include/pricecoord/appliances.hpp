#pragma once

#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "pricecoord/polyhedron.hpp"

namespace pricecoord {

/// Seconds per scheduling slot used for the water-heater energy balance.
inline constexpr double kSlotSeconds = 900.0;
/// kg per liter of water.
inline constexpr double kWaterDensity = 1.0;

enum class HvacMode { heating, cooling };

struct HvacSpec {
  double gamma1 = 0.05;        // insulation coefficient per slot, (0, 1]
  double gamma2 = 0.4;         // degC per kW-slot
  double t_low = 20.0;         // degC
  double t_upper = 24.0;       // degC
  double t_init = 22.0;        // degC
  double nominal_power = 3.0;  // kW
  HvacMode mode = HvacMode::heating;

  void validate() const;
  double sign() const { return mode == HvacMode::heating ? 1.0 : -1.0; }
};

struct EwhSpec {
  double capacity = 200.0;        // liters
  double max_power = 4.0;         // kW
  double efficiency = 0.95;
  double specific_heat = 4186.0;  // J/(kg degC)
  double desired_temp = 50.0;     // degC
  double tap_temp = 10.0;         // degC
  double init_level = 150.0;      // liters
  std::vector<double> demand;     // liters drawn per slot

  void validate() const;
  /// Liters brought to the desired temperature by 1 kW over one slot.
  double liters_per_kw_slot() const;
};

/// Charging power is counted directly as energy per slot (z = p).
struct EvSpec {
  double capacity = 40.0;     // kWh
  double max_power = 5.0;     // kW
  double init_charge = 10.0;  // kWh
  std::vector<double> demand; // kWh consumed per slot

  void validate() const;
  bool in_use(int slot) const { return demand.at(slot) > 0.0; }
};

struct BasicApplianceSpec {
  int window_start = 0;
  int window_end = 0;
  double total_energy = 1.0;  // kW-slots
  double max_power = 1.0;     // kW

  void validate(int horizon) const;
  int window_length() const { return window_end - window_start + 1; }
  bool in_window(int slot) const { return slot >= window_start && slot <= window_end; }
};

using ApplianceSpec = std::variant<HvacSpec, EwhSpec, EvSpec, BasicApplianceSpec>;

/// Closed-form room temperature T_in(t), t = 1..K, as
/// `power_coefficients * p + constant`.
struct HvacClosedForm {
  Eigen::MatrixXd power_coefficients;  // K x K, lower triangular
  Eigen::VectorXd constant;            // K
};

HvacClosedForm hvac_closed_form(const HvacSpec& spec, const Eigen::VectorXd& outside_temp);

/// Room temperature T_in(1..K) by forward recursion.
Eigen::VectorXd hvac_temperature_trajectory(const HvacSpec& spec, const Eigen::VectorXd& schedule,
                                            const Eigen::VectorXd& outside_temp);

/// Hot water level x(0..K) in liters.
Eigen::VectorXd ewh_level_trajectory(const EwhSpec& spec, const Eigen::VectorXd& schedule);

/// Battery charge x(0..K) in kWh; charging during in-use slots is ignored.
Eigen::VectorXd ev_charge_trajectory(const EvSpec& spec, const Eigen::VectorXd& schedule);

// Each builder throws InfeasibleError when a cheap analytic check already
// shows the block is empty.
ConstraintBlock build_hvac_block(const HvacSpec& spec, const Eigen::VectorXd& outside_temp);
ConstraintBlock build_ewh_block(const EwhSpec& spec);
ConstraintBlock build_ev_block(const EvSpec& spec);
ConstraintBlock build_basic_block(const BasicApplianceSpec& spec, int horizon);

ConstraintBlock build_block(const ApplianceSpec& spec, const Eigen::VectorXd& outside_temp);

const char* appliance_kind(const ApplianceSpec& spec);

}  // namespace pricecoord
