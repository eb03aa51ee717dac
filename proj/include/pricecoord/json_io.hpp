#pragma once

#include <initializer_list>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "pricecoord/errors.hpp"
#include "pricecoord/scenario.hpp"

namespace pricecoord {

using Json = nlohmann::json;

/// Throws ConfigError naming the first key of `object` not in `allowed`.
void reject_unknown_keys(const Json& object, std::initializer_list<const char*> allowed, const std::string& where);

/// Parses JSON text; syntax errors become ConfigError with line and column.
Json parse_json_text(const std::string& text, const std::string& source);

/// object[key] as T; a wrong type is a ConfigError naming where.key.
template <typename T>
T read(const Json& object, const char* key, const std::string& where) {
  const auto& value = object.at(key);
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!value.is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!value.is_number_integer()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!value.is_string()) throw ConfigError("");
    }
    return value.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

/// Assigns object[key] to out when the key is present.
template <typename T>
void read_if(const Json& object, const char* key, T& out, const std::string& where) {
  if (object.contains(key)) out = read<T>(object, key, where);
}

Json to_json(const NeighborhoodConfig& config);
/// Reads the keys present in `object` on top of `config`; unknown keys are
/// rejected.
void merge_json(const Json& object, NeighborhoodConfig& config);

Json to_json(const ApplianceSpec& spec);
ApplianceSpec appliance_from_json(const Json& object);

}  // namespace pricecoord
