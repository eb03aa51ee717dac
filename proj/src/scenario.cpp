#include "pricecoord/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pricecoord/errors.hpp"
#include "pricecoord/home_agent.hpp"
#include "pricecoord/qp.hpp"
#include "pricecoord/random.hpp"

namespace pricecoord {

namespace {

constexpr double kDesiredTolerance = 1e-7;

void check_range(const Range& r, const char* name, bool positive = false) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw ConfigError(std::string("sampling.") + name + ": lo must not exceed hi");
  }
  if (positive && r.lo <= 0.0) throw ConfigError(std::string("sampling.") + name + ": values must be positive");
}

void check_range(const IntRange& r, const char* name) {
  if (r.lo > r.hi || r.lo < 1) throw ConfigError(std::string("sampling.") + name + ": need 1 <= lo <= hi");
}

}  // namespace

void NeighborhoodConfig::validate() const {
  if (n_homes < 1) throw ConfigError("homes: need at least one home");
  if (horizon < 2) throw ConfigError("horizon: need at least two slots");
  if (slot_minutes < 1) throw ConfigError("slot_minutes: must be positive");
  if (!(price_low < price_high)) throw ConfigError("price box: price_low must be below price_high");
  if (max_attempts < 1) throw ConfigError("max_attempts: must be positive");
  const auto& s = sampling;
  check_range(s.gamma1, "gamma1", true);
  if (s.gamma1.hi > 1.0) throw ConfigError("sampling.gamma1: must not exceed 1");
  check_range(s.gamma2, "gamma2", true);
  check_range(s.comfort_low, "comfort_low");
  check_range(s.comfort_high, "comfort_high");
  if (s.comfort_low.hi >= s.comfort_high.lo) throw ConfigError("sampling: comfort bands may be empty");
  check_range(s.hvac_power, "hvac_power", true);
  check_range(s.initial_temp_offset, "initial_temp_offset");
  check_range(s.ewh_capacity, "ewh_capacity", true);
  check_range(s.ewh_power, "ewh_power", true);
  check_range(s.ewh_efficiency, "ewh_efficiency", true);
  if (s.ewh_efficiency.hi > 1.0) throw ConfigError("sampling.ewh_efficiency: must not exceed 1");
  check_range(s.ewh_initial_fraction, "ewh_initial_fraction");
  check_range(s.ewh_pulses, "ewh_pulses");
  check_range(s.ewh_pulse_liters, "ewh_pulse_liters");
  if (!(s.ewh_desired_temp > s.ewh_tap_temp)) throw ConfigError("sampling: ewh_desired_temp must exceed ewh_tap_temp");
  if (!(s.water_specific_heat > 0.0)) throw ConfigError("sampling.water_specific_heat: must be positive");
  check_range(s.ev_capacity, "ev_capacity", true);
  check_range(s.ev_power, "ev_power", true);
  check_range(s.ev_initial_fraction, "ev_initial_fraction");
  check_range(s.ev_usage_slots, "ev_usage_slots");
  check_range(s.ev_trip_energy, "ev_trip_energy");
  check_range(s.basic_window, "basic_window");
  check_range(s.basic_energy, "basic_energy");
  check_range(s.basic_power, "basic_power", true);
  check_range(s.comfort_weight, "comfort_weight", true);
  if (s.ewh_initial_fraction.lo < 0.0 || s.ewh_initial_fraction.hi > 1.0 || s.ev_initial_fraction.lo < 0.0 ||
      s.ev_initial_fraction.hi > 1.0) {
    throw ConfigError("sampling: initial fractions must lie in [0, 1]");
  }
  if (s.ewh_pulse_liters.lo < 0.0 || s.ev_trip_energy.lo < 0.0 || s.basic_energy.lo < 0.0) {
    throw ConfigError("sampling: demands must be nonnegative");
  }
}

Eigen::VectorXd outside_temperature(const NeighborhoodConfig& config) {
  const int K = config.horizon;
  const auto& s = config.sampling;
  Eigen::VectorXd out(K);
  for (int t = 0; t < K; ++t) {
    out(t) = s.outside_mean + s.outside_amplitude * std::sin(2.0 * std::numbers::pi * (t - s.outside_phase) / K);
  }
  return out;
}

namespace {

Eigen::VectorXd hvac_desired(const HvacSpec& s, const Eigen::VectorXd& outside_temp) {
  const double mid = 0.5 * (s.t_low + s.t_upper);
  Eigen::VectorXd p(outside_temp.size());
  for (Eigen::Index t = 0; t < p.size(); ++t) {
    const double gap = s.sign() * (mid - outside_temp(t));
    p(t) = std::clamp(s.gamma1 * gap / s.gamma2, 0.0, s.nominal_power);
  }
  return p;
}

Eigen::VectorXd ewh_desired(const EwhSpec& s) {
  const double k = s.liters_per_kw_slot();
  const auto K = static_cast<Eigen::Index>(s.demand.size());
  Eigen::VectorXd p(K);
  double backlog = 0.0;  // liters drawn but not yet reheated
  for (Eigen::Index t = 0; t < K; ++t) {
    backlog += s.demand[t];
    p(t) = std::min(s.max_power, backlog / k);
    backlog = std::max(0.0, backlog - k * p(t));
  }
  return p;
}

Eigen::VectorXd ev_desired(const EvSpec& s) {
  const auto K = static_cast<Eigen::Index>(s.demand.size());
  double total = 0.0;
  int parked = 0;
  for (Eigen::Index t = 0; t < K; ++t) {
    total += s.demand[t];
    if (!s.in_use(static_cast<int>(t))) ++parked;
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(K);
  if (parked == 0) return p;
  const double rate = std::min(s.max_power, total / parked);
  for (Eigen::Index t = 0; t < K; ++t) {
    if (!s.in_use(static_cast<int>(t))) p(t) = rate;
  }
  return p;
}

Eigen::VectorXd basic_desired(const BasicApplianceSpec& s, int K) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(K);
  p.segment(s.window_start, s.window_length()).setConstant(s.total_energy / s.window_length());
  return p;
}

}  // namespace

DesiredSchedule desired_schedules(const std::vector<ApplianceSpec>& appliances, const Eigen::VectorXd& outside_temp) {
  const int K = static_cast<int>(outside_temp.size());
  DesiredSchedule desired(static_cast<Eigen::Index>(appliances.size()), K);
  for (std::size_t j = 0; j < appliances.size(); ++j) {
    const Eigen::VectorXd row = std::visit(
        [&](const auto& s) -> Eigen::VectorXd {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, HvacSpec>) return hvac_desired(s, outside_temp);
          else if constexpr (std::is_same_v<T, EwhSpec>) return ewh_desired(s);
          else if constexpr (std::is_same_v<T, EvSpec>) return ev_desired(s);
          else return basic_desired(s, K);
        },
        appliances[j]);
    if (row.size() != K) throw std::invalid_argument("desired schedule length differs from the horizon");
    desired.row(static_cast<Eigen::Index>(j)) = row.transpose();
  }
  return desired;
}

Eigen::VectorXd target_profile(const std::vector<DesiredSchedule>& desired, int horizon) {
  if (desired.empty()) throw std::invalid_argument("target profile needs at least one schedule");
  double total = 0.0;
  for (const auto& d : desired) {
    if (d.cols() != horizon) throw std::invalid_argument("desired schedule length differs from the horizon");
    for (Eigen::Index j = 0; j < d.rows(); ++j)
      for (Eigen::Index t = 0; t < d.cols(); ++t) total += d(j, t);
  }
  return Eigen::VectorXd::Constant(horizon, total / horizon);
}

namespace {

struct BlockCertificate {
  bool feasible = false;
  Eigen::VectorXd point;
};

bool inside(const ConstraintBlock& block, const Eigen::VectorXd& p) {
  return block.rows() == 0 || (block.matrix * p - block.rhs).maxCoeff() <= kDesiredTolerance;
}

/// Maximizes a common slack s on the rows coupling several slots. Only used
/// to pick the row to blame once a block is known to be empty.
Eigen::VectorXd slack_point(const ConstraintBlock& block) {
  constexpr double kMu = 1e-5;
  constexpr double kSlackCap = 1.0;
  const int K = block.horizon();
  const int rows = block.rows();
  // Variables (p, s). Single-variable rows stay hard so pinned slots do not
  // force s = 0 everywhere.
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(rows + 1, K + 1);
  Eigen::VectorXd h(rows + 1);
  G.topLeftCorner(rows, K) = block.matrix;
  h.head(rows) = block.rhs;
  for (int r = 0; r < rows; ++r) {
    const auto row = block.matrix.row(r);
    if ((row.array() != 0.0).count() > 1) G(r, K) = row.norm();
  }
  G(rows, K) = 1.0;
  h(rows) = kSlackCap;
  Eigen::VectorXd linear = Eigen::VectorXd::Zero(K + 1);
  linear(K) = -1.0;
  QpSolver solver(Eigen::VectorXd::Constant(K + 1, kMu), G, h);
  const auto r = solver.solve(linear);
  if (r.status == QpStatus::infeasible) return Eigen::VectorXd::Zero(K);
  return r.x.head(K);
}

/// Projects `anchor` onto the block. An optimal projection is a feasible
/// point; a primal infeasibility certificate from the solver means the block
/// is empty.
BlockCertificate certify_block(const ConstraintBlock& block, const Eigen::VectorXd& anchor) {
  const int K = block.horizon();
  BlockCertificate out;
  QpSolver solver(Eigen::VectorXd::Ones(K), block.matrix, block.rhs);
  const auto r = solver.solve(-anchor);
  if (r.status != QpStatus::infeasible && inside(block, r.x)) {
    out.feasible = true;
    out.point = r.x;
    return out;
  }
  if (r.status == QpStatus::max_iter) {
    throw NumericalError("feasibility check of block '" + block.appliance + "' did not converge");
  }
  out.point = slack_point(block);
  out.feasible = inside(block, out.point);
  return out;
}

}  // namespace

FeasibilityCertificate feasibility_certify(const ConstraintPolyhedron& polyhedron, const Eigen::VectorXd* hint) {
  FeasibilityCertificate cert;
  if (hint != nullptr && hint->size() == polyhedron.num_variables()) {
    cert.max_violation = polyhedron.max_violation(*hint);
    if (cert.max_violation <= kDesiredTolerance) {
      cert.feasible = true;
      cert.point = *hint;
      return cert;
    }
  }
  const int K = polyhedron.horizon();
  cert.point.resize(polyhedron.num_variables());
  cert.feasible = true;
  for (int j = 0; j < polyhedron.num_blocks(); ++j) {
    const auto& block = polyhedron.block(j);
    if (hint != nullptr && hint->size() == polyhedron.num_variables()) {
      const Eigen::VectorXd part = hint->segment(polyhedron.range(j).col_begin, K);
      if (block.rows() == 0 || (block.matrix * part - block.rhs).maxCoeff() <= kDesiredTolerance) {
        cert.point.segment(polyhedron.range(j).col_begin, K) = part;
        continue;
      }
    }
    const auto b = certify_block(block, Eigen::VectorXd::Zero(K));
    cert.point.segment(polyhedron.range(j).col_begin, K) = b.point;
    cert.feasible = cert.feasible && b.feasible;
  }
  cert.max_violation = polyhedron.max_violation(cert.point);
  if (!cert.feasible && polyhedron.num_rows() > 0) {
    cert.row_label = polyhedron.label(polyhedron.most_violated_row(cert.point));
  }
  return cert;
}

namespace {

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }
int draw(Rng& rng, const IntRange& r) { return static_cast<int>(rng.integer(r.lo, r.hi)); }

std::vector<ApplianceSpec> sample_home(Rng& rng, const NeighborhoodConfig& config, const Eigen::VectorXd& outside) {
  const auto& s = config.sampling;
  const int K = config.horizon;

  HvacSpec hvac;
  hvac.gamma1 = draw(rng, s.gamma1);
  hvac.gamma2 = draw(rng, s.gamma2);
  hvac.t_low = draw(rng, s.comfort_low);
  hvac.t_upper = draw(rng, s.comfort_high);
  hvac.nominal_power = draw(rng, s.hvac_power);
  const double mid = 0.5 * (hvac.t_low + hvac.t_upper);
  hvac.t_init = std::clamp(mid + draw(rng, s.initial_temp_offset), hvac.t_low, hvac.t_upper);
  hvac.mode = outside.mean() < mid ? HvacMode::heating : HvacMode::cooling;

  EwhSpec ewh;
  ewh.capacity = draw(rng, s.ewh_capacity);
  ewh.max_power = draw(rng, s.ewh_power);
  ewh.efficiency = draw(rng, s.ewh_efficiency);
  ewh.init_level = ewh.capacity * draw(rng, s.ewh_initial_fraction);
  ewh.desired_temp = s.ewh_desired_temp;
  ewh.tap_temp = s.ewh_tap_temp;
  ewh.specific_heat = s.water_specific_heat;
  ewh.demand.assign(K, 0.0);
  const int pulses = draw(rng, s.ewh_pulses);
  for (int k = 0; k < pulses; ++k) {
    const int slot = static_cast<int>(rng.integer(0, K - 1));
    ewh.demand[slot] += draw(rng, s.ewh_pulse_liters);
  }

  EvSpec ev;
  ev.capacity = draw(rng, s.ev_capacity);
  ev.max_power = draw(rng, s.ev_power);
  ev.init_charge = ev.capacity * draw(rng, s.ev_initial_fraction);
  ev.demand.assign(K, 0.0);
  {
    // Trips happen during the day, between 8:00 and 18:00 for K = 96.
    const int day_begin = K / 3;
    const int day_end = std::max(day_begin + 1, (3 * K) / 4);
    const int length = std::clamp(draw(rng, s.ev_usage_slots), 1, std::max(1, std::min(K / 8, day_end - day_begin)));
    const int start = static_cast<int>(rng.integer(day_begin, day_end - length));
    const double trip = draw(rng, s.ev_trip_energy);
    for (int t = start; t < start + length; ++t) ev.demand[t] = trip / length;
  }

  BasicApplianceSpec basic;
  {
    const int length = std::clamp(draw(rng, s.basic_window), 1, K);
    basic.window_start = static_cast<int>(rng.integer(0, K - length));
    basic.window_end = basic.window_start + length - 1;
    basic.total_energy = draw(rng, s.basic_energy);
    basic.max_power = draw(rng, s.basic_power);
  }
  return {hvac, ewh, ev, basic};
}

ConstraintPolyhedron build_polyhedron(const std::vector<ApplianceSpec>& appliances, const Eigen::VectorXd& outside) {
  std::vector<ConstraintBlock> blocks;
  blocks.reserve(appliances.size());
  for (const auto& a : appliances) blocks.push_back(build_block(a, outside));
  return assemble_home_polyhedron(std::move(blocks));
}

}  // namespace

Scenario generate_neighborhood(const NeighborhoodConfig& config) {
  config.validate();
  Scenario scenario;
  scenario.config = config;
  scenario.outside_temp = outside_temperature(config);
  Rng rng(config.seed);
  const auto& s = config.sampling;

  scenario.homes.reserve(config.n_homes);
  for (int i = 0; i < config.n_homes; ++i) {
    std::string last_failure;
    bool accepted = false;
    for (int attempt = 1; attempt <= config.max_attempts && !accepted; ++attempt) {
      auto appliances = sample_home(rng, config, scenario.outside_temp);
      ComfortWeights weights(static_cast<Eigen::Index>(appliances.size()));
      for (Eigen::Index j = 0; j < weights.size(); ++j) weights(j) = draw(rng, s.comfort_weight);
      ConstraintPolyhedron poly;
      try {
        poly = build_polyhedron(appliances, scenario.outside_temp);
      } catch (const InfeasibleError& e) {
        last_failure = e.row_label();
        continue;
      }
      DesiredSchedule desired = desired_schedules(appliances, scenario.outside_temp);
      const Eigen::VectorXd stacked = stack_rows(desired);
      // The desired schedule itself is the feasibility certificate.
      if (poly.max_violation(stacked) > kDesiredTolerance) {
        last_failure = poly.label(poly.most_violated_row(stacked));
        continue;
      }
      HomeScenario home;
      home.appliances = std::move(appliances);
      home.polyhedron = std::move(poly);
      home.desired = std::move(desired);
      home.weights = std::move(weights);
      home.attempts = attempt;
      scenario.homes.push_back(std::move(home));
      accepted = true;
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "home " << i << " is still infeasible after " << config.max_attempts << " draws (last failing row "
          << last_failure << ")";
      throw InfeasibleError(last_failure, msg.str());
    }
  }

  std::vector<DesiredSchedule> all;
  all.reserve(scenario.homes.size());
  for (const auto& h : scenario.homes) all.push_back(h.desired);
  scenario.target = target_profile(all, config.horizon);
  return scenario;
}

Scenario assemble_scenario(const NeighborhoodConfig& config, const Eigen::VectorXd& outside_temp,
                           const std::vector<std::vector<ApplianceSpec>>& homes,
                           const std::vector<ComfortWeights>& weights) {
  if (homes.size() != weights.size() || homes.empty()) throw std::invalid_argument("one weight vector per home expected");
  Scenario scenario;
  scenario.config = config;
  scenario.config.n_homes = static_cast<int>(homes.size());
  scenario.config.horizon = static_cast<int>(outside_temp.size());
  scenario.config.validate();
  scenario.outside_temp = outside_temp;
  std::vector<DesiredSchedule> all;
  for (std::size_t i = 0; i < homes.size(); ++i) {
    HomeScenario home;
    home.appliances = homes[i];
    home.weights = weights[i];
    home.polyhedron = build_polyhedron(home.appliances, outside_temp);
    home.desired = desired_schedules(home.appliances, outside_temp);
    const Eigen::VectorXd stacked = stack_rows(home.desired);
    if (home.polyhedron.max_violation(stacked) > kDesiredTolerance) {
      const auto row = home.polyhedron.label(home.polyhedron.most_violated_row(stacked));
      throw InfeasibleError(row, "home " + std::to_string(i) + ": desired schedule violates " + row);
    }
    all.push_back(home.desired);
    scenario.homes.push_back(std::move(home));
  }
  scenario.target = target_profile(all, scenario.horizon());
  rebuild_polyhedra(scenario);
  return scenario;
}

void rebuild_polyhedra(Scenario& scenario) {
  for (std::size_t i = 0; i < scenario.homes.size(); ++i) {
    auto& home = scenario.homes[i];
    home.polyhedron = build_polyhedron(home.appliances, scenario.outside_temp);
    if (home.desired.rows() != home.num_appliances() || home.desired.cols() != scenario.horizon() ||
        home.weights.size() != home.num_appliances()) {
      throw ConfigError("scenario home " + std::to_string(i) + ": desired schedule or weights have the wrong shape");
    }
    if ((home.weights.array() <= 0.0).any()) {
      throw ConfigError("scenario home " + std::to_string(i) + ": comfort weights must be positive");
    }
  }
}

}  // namespace pricecoord
