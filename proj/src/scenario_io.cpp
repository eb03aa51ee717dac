#include <fstream>
#include <sstream>

#include "pricecoord/errors.hpp"
#include "pricecoord/json_io.hpp"

namespace pricecoord {

void reject_unknown_keys(const Json& object, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!object.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = object.begin(); it != object.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) known = known || it.key() == key;
    if (!known) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream msg;
    msg << source << ":" << line << ":" << column << ": malformed JSON";
    throw ConfigError(msg.str());
  }
}

namespace {

template <typename R>
void read_range_if(const Json& object, const char* key, R& out, const std::string& where) {
  if (!object.contains(key)) return;
  const auto& v = object.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(where + "." + key + ": expected [lo, hi]");
  }
  using V = decltype(out.lo);
  if constexpr (std::is_integral_v<V>) {
    if (!v[0].is_number_integer() || !v[1].is_number_integer()) throw ConfigError(where + "." + key + ": expected integers");
  }
  out.lo = v[0].get<V>();
  out.hi = v[1].get<V>();
}

template <typename R>
Json range_json(const R& r) {
  return Json::array({r.lo, r.hi});
}

std::vector<double> read_series(const Json& object, const char* key, const std::string& where) {
  const auto& v = object.at(key);
  if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(where + "." + key + ": expected numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json series_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace

Json to_json(const NeighborhoodConfig& c) {
  const auto& s = c.sampling;
  Json sampling = {
      {"gamma1", range_json(s.gamma1)},
      {"gamma2", range_json(s.gamma2)},
      {"comfort_low", range_json(s.comfort_low)},
      {"comfort_high", range_json(s.comfort_high)},
      {"hvac_power", range_json(s.hvac_power)},
      {"initial_temp_offset", range_json(s.initial_temp_offset)},
      {"ewh_capacity", range_json(s.ewh_capacity)},
      {"ewh_power", range_json(s.ewh_power)},
      {"ewh_efficiency", range_json(s.ewh_efficiency)},
      {"ewh_initial_fraction", range_json(s.ewh_initial_fraction)},
      {"ewh_pulses", range_json(s.ewh_pulses)},
      {"ewh_pulse_liters", range_json(s.ewh_pulse_liters)},
      {"ewh_desired_temp", s.ewh_desired_temp},
      {"ewh_tap_temp", s.ewh_tap_temp},
      {"water_specific_heat", s.water_specific_heat},
      {"ev_capacity", range_json(s.ev_capacity)},
      {"ev_power", range_json(s.ev_power)},
      {"ev_initial_fraction", range_json(s.ev_initial_fraction)},
      {"ev_usage_slots", range_json(s.ev_usage_slots)},
      {"ev_trip_energy", range_json(s.ev_trip_energy)},
      {"basic_window", range_json(s.basic_window)},
      {"basic_energy", range_json(s.basic_energy)},
      {"basic_power", range_json(s.basic_power)},
      {"comfort_weight", range_json(s.comfort_weight)},
      {"outside_mean", s.outside_mean},
      {"outside_amplitude", s.outside_amplitude},
      {"outside_phase", s.outside_phase},
  };
  return {{"homes", c.n_homes},         {"horizon", c.horizon},       {"slot_minutes", c.slot_minutes},
          {"price_low", c.price_low},   {"price_high", c.price_high}, {"seed", c.seed},
          {"max_attempts", c.max_attempts}, {"sampling", sampling}};
}

void merge_json(const Json& object, NeighborhoodConfig& c) {
  const std::string where = "neighborhood";
  reject_unknown_keys(object, {"homes", "horizon", "slot_minutes", "price_low", "price_high", "seed", "max_attempts", "sampling"},
                      where);
  read_if(object, "homes", c.n_homes, where);
  read_if(object, "horizon", c.horizon, where);
  read_if(object, "slot_minutes", c.slot_minutes, where);
  read_if(object, "price_low", c.price_low, where);
  read_if(object, "price_high", c.price_high, where);
  read_if(object, "seed", c.seed, where);
  read_if(object, "max_attempts", c.max_attempts, where);
  if (!object.contains("sampling")) return;
  const auto& j = object.at("sampling");
  const std::string sw = "sampling";
  reject_unknown_keys(j,
                      {"gamma1", "gamma2", "comfort_low", "comfort_high", "hvac_power", "initial_temp_offset",
                       "ewh_capacity", "ewh_power", "ewh_efficiency", "ewh_initial_fraction", "ewh_pulses",
                       "ewh_pulse_liters", "ewh_desired_temp", "ewh_tap_temp", "water_specific_heat", "ev_capacity",
                       "ev_power", "ev_initial_fraction", "ev_usage_slots", "ev_trip_energy", "basic_window",
                       "basic_energy", "basic_power", "comfort_weight", "outside_mean", "outside_amplitude",
                       "outside_phase"},
                      sw);
  auto& s = c.sampling;
  read_range_if(j, "gamma1", s.gamma1, sw);
  read_range_if(j, "gamma2", s.gamma2, sw);
  read_range_if(j, "comfort_low", s.comfort_low, sw);
  read_range_if(j, "comfort_high", s.comfort_high, sw);
  read_range_if(j, "hvac_power", s.hvac_power, sw);
  read_range_if(j, "initial_temp_offset", s.initial_temp_offset, sw);
  read_range_if(j, "ewh_capacity", s.ewh_capacity, sw);
  read_range_if(j, "ewh_power", s.ewh_power, sw);
  read_range_if(j, "ewh_efficiency", s.ewh_efficiency, sw);
  read_range_if(j, "ewh_initial_fraction", s.ewh_initial_fraction, sw);
  read_range_if(j, "ewh_pulses", s.ewh_pulses, sw);
  read_range_if(j, "ewh_pulse_liters", s.ewh_pulse_liters, sw);
  read_if(j, "ewh_desired_temp", s.ewh_desired_temp, sw);
  read_if(j, "ewh_tap_temp", s.ewh_tap_temp, sw);
  read_if(j, "water_specific_heat", s.water_specific_heat, sw);
  read_range_if(j, "ev_capacity", s.ev_capacity, sw);
  read_range_if(j, "ev_power", s.ev_power, sw);
  read_range_if(j, "ev_initial_fraction", s.ev_initial_fraction, sw);
  read_range_if(j, "ev_usage_slots", s.ev_usage_slots, sw);
  read_range_if(j, "ev_trip_energy", s.ev_trip_energy, sw);
  read_range_if(j, "basic_window", s.basic_window, sw);
  read_range_if(j, "basic_energy", s.basic_energy, sw);
  read_range_if(j, "basic_power", s.basic_power, sw);
  read_range_if(j, "comfort_weight", s.comfort_weight, sw);
  read_if(j, "outside_mean", s.outside_mean, sw);
  read_if(j, "outside_amplitude", s.outside_amplitude, sw);
  read_if(j, "outside_phase", s.outside_phase, sw);
}

Json to_json(const ApplianceSpec& spec) {
  return std::visit(
      [](const auto& s) -> Json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, HvacSpec>) {
          return {{"kind", "hvac"},       {"gamma1", s.gamma1},   {"gamma2", s.gamma2},
                  {"t_low", s.t_low},     {"t_upper", s.t_upper}, {"t_init", s.t_init},
                  {"nominal_power", s.nominal_power}, {"mode", s.mode == HvacMode::heating ? "heating" : "cooling"}};
        } else if constexpr (std::is_same_v<T, EwhSpec>) {
          return {{"kind", "ewh"},
                  {"capacity", s.capacity},
                  {"max_power", s.max_power},
                  {"efficiency", s.efficiency},
                  {"specific_heat", s.specific_heat},
                  {"desired_temp", s.desired_temp},
                  {"tap_temp", s.tap_temp},
                  {"init_level", s.init_level},
                  {"demand", s.demand}};
        } else if constexpr (std::is_same_v<T, EvSpec>) {
          return {{"kind", "ev"},
                  {"capacity", s.capacity},
                  {"max_power", s.max_power},
                  {"init_charge", s.init_charge},
                  {"demand", s.demand}};
        } else {
          return {{"kind", "basic"},
                  {"window_start", s.window_start},
                  {"window_end", s.window_end},
                  {"total_energy", s.total_energy},
                  {"max_power", s.max_power}};
        }
      },
      spec);
}

ApplianceSpec appliance_from_json(const Json& j) {
  const std::string where = "appliance";
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("appliance: missing 'kind'");
  const auto kind = read<std::string>(j, "kind", where);
  try {
    if (kind == "hvac") {
      reject_unknown_keys(j, {"kind", "gamma1", "gamma2", "t_low", "t_upper", "t_init", "nominal_power", "mode"}, "hvac");
      HvacSpec s;
      s.gamma1 = read<double>(j, "gamma1", "hvac");
      s.gamma2 = read<double>(j, "gamma2", "hvac");
      s.t_low = read<double>(j, "t_low", "hvac");
      s.t_upper = read<double>(j, "t_upper", "hvac");
      s.t_init = read<double>(j, "t_init", "hvac");
      s.nominal_power = read<double>(j, "nominal_power", "hvac");
      const auto mode = read<std::string>(j, "mode", "hvac");
      if (mode != "heating" && mode != "cooling") throw ConfigError("hvac.mode: expected heating or cooling");
      s.mode = mode == "heating" ? HvacMode::heating : HvacMode::cooling;
      return s;
    }
    if (kind == "ewh") {
      reject_unknown_keys(j, {"kind", "capacity", "max_power", "efficiency", "specific_heat", "desired_temp", "tap_temp",
                              "init_level", "demand"},
                          "ewh");
      EwhSpec s;
      s.capacity = read<double>(j, "capacity", "ewh");
      s.max_power = read<double>(j, "max_power", "ewh");
      s.efficiency = read<double>(j, "efficiency", "ewh");
      s.specific_heat = read<double>(j, "specific_heat", "ewh");
      s.desired_temp = read<double>(j, "desired_temp", "ewh");
      s.tap_temp = read<double>(j, "tap_temp", "ewh");
      s.init_level = read<double>(j, "init_level", "ewh");
      s.demand = read_series(j, "demand", "ewh");
      return s;
    }
    if (kind == "ev") {
      reject_unknown_keys(j, {"kind", "capacity", "max_power", "init_charge", "demand"}, "ev");
      EvSpec s;
      s.capacity = read<double>(j, "capacity", "ev");
      s.max_power = read<double>(j, "max_power", "ev");
      s.init_charge = read<double>(j, "init_charge", "ev");
      s.demand = read_series(j, "demand", "ev");
      return s;
    }
    if (kind == "basic") {
      reject_unknown_keys(j, {"kind", "window_start", "window_end", "total_energy", "max_power"}, "basic");
      BasicApplianceSpec s;
      s.window_start = read<int>(j, "window_start", "basic");
      s.window_end = read<int>(j, "window_end", "basic");
      s.total_energy = read<double>(j, "total_energy", "basic");
      s.max_power = read<double>(j, "max_power", "basic");
      return s;
    }
  } catch (const Json::out_of_range& e) {
    throw ConfigError(kind + ": missing field (" + std::string(e.what()) + ")");
  }
  throw ConfigError("appliance: unknown kind '" + kind + "'");
}

std::string scenario_to_json(const Scenario& scenario) {
  Json homes = Json::array();
  for (const auto& h : scenario.homes) {
    Json appliances = Json::array();
    for (const auto& a : h.appliances) appliances.push_back(to_json(a));
    Json desired = Json::array();
    for (Eigen::Index j = 0; j < h.desired.rows(); ++j) desired.push_back(series_json(h.desired.row(j).transpose()));
    homes.push_back({{"appliances", appliances}, {"weights", series_json(h.weights)}, {"desired", desired},
                     {"attempts", h.attempts}});
  }
  Json doc = {{"format", "pricecoord-scenario"},
              {"version", 1},
              {"config", to_json(scenario.config)},
              {"outside_temp", series_json(scenario.outside_temp)},
              {"target", series_json(scenario.target)},
              {"homes", homes}};
  return doc.dump(1) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
  const Json doc = parse_json_text(text, "scenario");
  reject_unknown_keys(doc, {"format", "version", "config", "outside_temp", "target", "homes"}, "scenario");
  try {
    if (read<std::string>(doc, "format", "scenario") != "pricecoord-scenario" || read<int>(doc, "version", "scenario") != 1) {
      throw ConfigError("scenario: unsupported format or version");
    }
    Scenario s;
    merge_json(doc.at("config"), s.config);
    s.config.validate();
    s.outside_temp = to_vector(read_series(doc, "outside_temp", "scenario"));
    s.target = to_vector(read_series(doc, "target", "scenario"));
    const int K = s.horizon();
    if (K != s.config.horizon || s.target.size() != K) throw ConfigError("scenario: series lengths differ from the horizon");
    const auto& homes = doc.at("homes");
    if (!homes.is_array()) throw ConfigError("scenario.homes: expected an array");
    for (const auto& hj : homes) {
      reject_unknown_keys(hj, {"appliances", "weights", "desired", "attempts"}, "home");
      HomeScenario h;
      for (const auto& a : hj.at("appliances")) h.appliances.push_back(appliance_from_json(a));
      h.weights = to_vector(read_series(hj, "weights", "home"));
      h.attempts = read<int>(hj, "attempts", "home");
      const auto& rows = hj.at("desired");
      h.desired.resize(static_cast<Eigen::Index>(rows.size()), K);
      Eigen::Index j = 0;
      for (const auto& row : rows) {
        if (!row.is_array() || static_cast<int>(row.size()) != K) throw ConfigError("home.desired: row length differs from K");
        for (int t = 0; t < K; ++t) {
          if (!row[t].is_number()) throw ConfigError("home.desired: expected numbers");
          h.desired(j, t) = row[t].get<double>();
        }
        ++j;
      }
      s.homes.push_back(std::move(h));
    }
    if (s.num_homes() != s.config.n_homes) throw ConfigError("scenario: home count differs from config.homes");
    rebuild_polyhedra(s);
    return s;
  } catch (const Json::out_of_range& e) {
    throw ConfigError(std::string("scenario: missing field (") + e.what() + ")");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write scenario file " + path);
  out << scenario_to_json(scenario);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read scenario file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return scenario_from_json(buffer.str());
}

}  // namespace pricecoord
