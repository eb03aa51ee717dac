#include "pricecoord/appliances.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pricecoord/errors.hpp"

namespace pricecoord {

namespace {

std::string at(const char* name, int t) { return std::string(name) + "[t=" + std::to_string(t) + "]"; }

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

void HvacSpec::validate() const {
  require(gamma1 > 0.0 && gamma1 <= 1.0, "hvac: gamma1 must lie in (0, 1]");
  require(gamma2 > 0.0, "hvac: gamma2 must be positive");
  require(t_low < t_upper, "hvac: comfort band is empty");
  require(t_low <= t_init && t_init <= t_upper, "hvac: initial temperature outside the comfort band");
  require(nominal_power > 0.0, "hvac: nominal power must be positive");
}

void EwhSpec::validate() const {
  require(efficiency > 0.0 && efficiency <= 1.0, "ewh: efficiency must lie in (0, 1]");
  require(desired_temp > tap_temp, "ewh: desired temperature must exceed tap temperature");
  require(specific_heat > 0.0, "ewh: specific heat must be positive");
  require(capacity > 0.0, "ewh: capacity must be positive");
  require(max_power >= 0.0, "ewh: max power must be nonnegative");
  require(init_level >= 0.0 && init_level <= capacity, "ewh: initial level outside [0, capacity]");
  require(!demand.empty(), "ewh: demand series is empty");
  for (double y : demand) require(y >= 0.0 && std::isfinite(y), "ewh: demand must be nonnegative");
}

double EwhSpec::liters_per_kw_slot() const {
  // kW * s -> kJ -> J, divided by the energy needed per kg of water.
  return kSlotSeconds * 1000.0 * efficiency / (specific_heat * (desired_temp - tap_temp)) / kWaterDensity;
}

void EvSpec::validate() const {
  require(capacity > 0.0, "ev: capacity must be positive");
  require(max_power >= 0.0, "ev: max power must be nonnegative");
  require(init_charge >= 0.0 && init_charge <= capacity, "ev: initial charge outside [0, capacity]");
  require(!demand.empty(), "ev: demand series is empty");
  for (double y : demand) require(y >= 0.0 && std::isfinite(y), "ev: demand must be nonnegative");
}

void BasicApplianceSpec::validate(int horizon) const {
  require(0 <= window_start && window_start <= window_end && window_end < horizon,
          "basic: window must satisfy 0 <= start <= end < K");
  require(total_energy >= 0.0, "basic: total energy must be nonnegative");
  require(max_power >= 0.0, "basic: max power must be nonnegative");
}

HvacClosedForm hvac_closed_form(const HvacSpec& spec, const Eigen::VectorXd& outside_temp) {
  spec.validate();
  require(all_finite(outside_temp), "hvac: outside temperature must be finite");
  const int K = static_cast<int>(outside_temp.size());
  const double decay = 1.0 - spec.gamma1;
  HvacClosedForm form;
  form.power_coefficients = Eigen::MatrixXd::Zero(K, K);
  form.constant.resize(K);
  // Row t-1 holds T_in(t). Powers of the decay are accumulated term by term.
  for (int t = 1; t <= K; ++t) {
    double weight = 1.0;  // (1 - gamma1)^a
    double constant = 0.0;
    for (int a = 0; a < t; ++a) {
      constant += weight * spec.gamma1 * outside_temp(t - 1 - a);
      form.power_coefficients(t - 1, t - 1 - a) = spec.sign() * weight * spec.gamma2;
      weight *= decay;
    }
    form.constant(t - 1) = weight * spec.t_init + constant;
  }
  return form;
}

Eigen::VectorXd hvac_temperature_trajectory(const HvacSpec& spec, const Eigen::VectorXd& schedule,
                                            const Eigen::VectorXd& outside_temp) {
  require(schedule.size() == outside_temp.size(), "hvac: schedule and outside temperature lengths differ");
  const auto K = schedule.size();
  Eigen::VectorXd temp(K);
  double current = spec.t_init;
  for (Eigen::Index t = 0; t < K; ++t) {
    current = current + spec.gamma1 * (outside_temp(t) - current) + spec.sign() * spec.gamma2 * schedule(t);
    temp(t) = current;
  }
  return temp;
}

Eigen::VectorXd ewh_level_trajectory(const EwhSpec& spec, const Eigen::VectorXd& schedule) {
  const auto K = static_cast<Eigen::Index>(spec.demand.size());
  require(schedule.size() == K, "ewh: schedule length differs from demand length");
  const double k = spec.liters_per_kw_slot();
  Eigen::VectorXd level(K + 1);
  level(0) = spec.init_level;
  for (Eigen::Index t = 0; t < K; ++t) level(t + 1) = level(t) + k * schedule(t) - spec.demand[t];
  return level;
}

Eigen::VectorXd ev_charge_trajectory(const EvSpec& spec, const Eigen::VectorXd& schedule) {
  const auto K = static_cast<Eigen::Index>(spec.demand.size());
  require(schedule.size() == K, "ev: schedule length differs from demand length");
  Eigen::VectorXd charge(K + 1);
  charge(0) = spec.init_charge;
  for (Eigen::Index t = 0; t < K; ++t) {
    const double delivered = spec.in_use(static_cast<int>(t)) ? 0.0 : schedule(t);
    charge(t + 1) = charge(t) + delivered - spec.demand[t];
  }
  return charge;
}

ConstraintBlock build_hvac_block(const HvacSpec& spec, const Eigen::VectorXd& outside_temp) {
  const auto form = hvac_closed_form(spec, outside_temp);
  const int K = static_cast<int>(outside_temp.size());

  // Temperature is monotone in every p(a), so the two extreme schedules bound
  // every reachable trajectory.
  const Eigen::VectorXd idle = form.constant;
  const Eigen::VectorXd full = form.constant + form.power_coefficients * Eigen::VectorXd::Constant(K, spec.nominal_power);
  const Eigen::VectorXd& warmest = spec.mode == HvacMode::heating ? full : idle;
  const Eigen::VectorXd& coolest = spec.mode == HvacMode::heating ? idle : full;
  for (int t = 1; t <= K; ++t) {
    if (coolest(t - 1) > spec.t_upper) {
      throw InfeasibleError("hvac/" + at("temp_max", t), "hvac: room exceeds the upper comfort bound at t=" +
                                                            std::to_string(t) + " for every admissible schedule");
    }
    if (warmest(t - 1) < spec.t_low) {
      throw InfeasibleError("hvac/" + at("temp_min", t), "hvac: room falls below the lower comfort bound at t=" +
                                                            std::to_string(t) + " for every admissible schedule");
    }
  }

  BlockBuilder rows("hvac", K);
  for (int t = 1; t <= K; ++t) {
    const Eigen::VectorXd coeff = form.power_coefficients.row(t - 1).transpose();
    rows.add(coeff, spec.t_upper - form.constant(t - 1), at("temp_max", t));
    rows.add(-coeff, form.constant(t - 1) - spec.t_low, at("temp_min", t));
  }
  for (int t = 0; t < K; ++t) {
    rows.add_upper(t, spec.nominal_power, at("power_max", t));
    rows.add_lower(t, 0.0, at("power_min", t));
  }
  return rows.build();
}

namespace {

// Shared by the water heater and the EV: level x(t) = x0 + sum_{a<t} (k_a p(a) - y(a)).
// Returns the greedy maximal trajectory; since the dynamics are monotone it is
// pointwise the largest reachable level, so checking it against the lower
// bounds decides feasibility exactly.
Eigen::VectorXd max_reachable_level(double init, double capacity, const Eigen::VectorXd& gain_per_slot,
                                    const std::vector<double>& demand) {
  const auto K = static_cast<Eigen::Index>(demand.size());
  Eigen::VectorXd level(K + 1);
  level(0) = init;
  for (Eigen::Index t = 0; t < K; ++t) {
    level(t + 1) = std::min(capacity, level(t) + gain_per_slot(t) - demand[t]);
  }
  return level;
}

void check_storage_reachable(const char* appliance, const Eigen::VectorXd& best, const std::vector<double>& demand,
                             double capacity) {
  const int K = static_cast<int>(demand.size());
  for (int t = 0; t < K; ++t) {
    if (demand[t] > capacity) {
      throw InfeasibleError(std::string(appliance) + "/" + at("demand", t),
                            std::string(appliance) + ": demand at t=" + std::to_string(t) + " exceeds capacity");
    }
  }
  if (best(0) < demand[0]) {
    throw InfeasibleError(std::string(appliance) + "/" + at("demand", 0),
                          std::string(appliance) + ": initial level does not cover demand at t=0");
  }
  for (int t = 1; t <= K; ++t) {
    const double required = t < K ? demand[t] : 0.0;
    if (best(t) < required) {
      const char* row = t < K ? "demand" : "level_min";
      throw InfeasibleError(std::string(appliance) + "/" + at(row, t),
                            std::string(appliance) + ": cumulative demand up to t=" + std::to_string(t) +
                                " exceeds the initial level plus the maximum possible input");
    }
  }
}

}  // namespace

ConstraintBlock build_ewh_block(const EwhSpec& spec) {
  spec.validate();
  const int K = static_cast<int>(spec.demand.size());
  const double k = spec.liters_per_kw_slot();

  check_storage_reachable("ewh", max_reachable_level(spec.init_level, spec.capacity,
                                                     Eigen::VectorXd::Constant(K, k * spec.max_power), spec.demand),
                          spec.demand, spec.capacity);

  BlockBuilder rows("ewh", K);
  Eigen::VectorXd cumulative = Eigen::VectorXd::Zero(K);
  double drawn = 0.0;  // sum_{a<t} y(a)
  for (int t = 1; t <= K; ++t) {
    cumulative(t - 1) = k;
    drawn += spec.demand[t - 1];
    rows.add(cumulative, spec.capacity - spec.init_level + drawn, at("level_max", t));
    if (t < K) rows.add(-cumulative, spec.init_level - drawn - spec.demand[t], at("demand", t));
    rows.add(-cumulative, spec.init_level - drawn, at("level_min", t));
  }
  for (int t = 0; t < K; ++t) {
    rows.add_upper(t, spec.max_power, at("power_max", t));
    rows.add_lower(t, 0.0, at("power_min", t));
  }
  return rows.build();
}

ConstraintBlock build_ev_block(const EvSpec& spec) {
  spec.validate();
  const int K = static_cast<int>(spec.demand.size());

  Eigen::VectorXd gain(K);
  for (int t = 0; t < K; ++t) gain(t) = spec.in_use(t) ? 0.0 : spec.max_power;
  check_storage_reachable("ev", max_reachable_level(spec.init_charge, spec.capacity, gain, spec.demand), spec.demand,
                          spec.capacity);

  BlockBuilder rows("ev", K);
  Eigen::VectorXd cumulative = Eigen::VectorXd::Zero(K);
  double used = 0.0;
  for (int t = 1; t <= K; ++t) {
    if (!spec.in_use(t - 1)) cumulative(t - 1) = 1.0;
    used += spec.demand[t - 1];
    rows.add(cumulative, spec.capacity - spec.init_charge + used, at("charge_max", t));
    const double required = t < K ? spec.demand[t] : 0.0;
    rows.add(-cumulative, spec.init_charge - used - required, at(t < K ? "demand" : "charge_min", t));
  }
  for (int t = 0; t < K; ++t) {
    rows.add_upper(t, spec.max_power, at("power_max", t));
    rows.add_lower(t, 0.0, at("power_min", t));
    if (spec.in_use(t)) rows.add_upper(t, 0.0, at("in_use", t));
  }
  return rows.build();
}

ConstraintBlock build_basic_block(const BasicApplianceSpec& spec, int horizon) {
  spec.validate(horizon);
  if (spec.total_energy > spec.max_power * spec.window_length()) {
    throw InfeasibleError("basic/energy_min", "basic: total energy exceeds max power times window length");
  }
  BlockBuilder rows("basic", horizon);
  Eigen::VectorXd window = Eigen::VectorXd::Zero(horizon);
  window.segment(spec.window_start, spec.window_length()).setOnes();
  rows.add(window, spec.total_energy, "energy_max");
  rows.add(-window, -spec.total_energy, "energy_min");
  for (int t = 0; t < horizon; ++t) {
    if (spec.in_window(t)) {
      rows.add_upper(t, spec.max_power, at("power_max", t));
      rows.add_lower(t, 0.0, at("power_min", t));
    } else {
      rows.add_upper(t, 0.0, at("off_window_max", t));
      rows.add_lower(t, 0.0, at("off_window_min", t));
    }
  }
  return rows.build();
}

ConstraintBlock build_block(const ApplianceSpec& spec, const Eigen::VectorXd& outside_temp) {
  const int K = static_cast<int>(outside_temp.size());
  return std::visit(
      [&](const auto& s) -> ConstraintBlock {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, HvacSpec>) {
          return build_hvac_block(s, outside_temp);
        } else if constexpr (std::is_same_v<T, EwhSpec>) {
          if (static_cast<int>(s.demand.size()) != K) throw std::invalid_argument("ewh: demand length differs from K");
          return build_ewh_block(s);
        } else if constexpr (std::is_same_v<T, EvSpec>) {
          if (static_cast<int>(s.demand.size()) != K) throw std::invalid_argument("ev: demand length differs from K");
          return build_ev_block(s);
        } else {
          return build_basic_block(s, K);
        }
      },
      spec);
}

const char* appliance_kind(const ApplianceSpec& spec) {
  static constexpr const char* kNames[] = {"hvac", "ewh", "ev", "basic"};
  return kNames[spec.index()];
}

}  // namespace pricecoord
