#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "vaforge/errors.hpp"

namespace vaforge {

// A hyperparameter or sampled search-space value.
using ParamValue = std::variant<std::int64_t, double, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

inline double as_double(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  throw HyperparamError("expected a number, got string '" + std::get<std::string>(v) + "'");
}

inline std::int64_t as_int(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) {
    const auto r = static_cast<std::int64_t>(*d);
    if (static_cast<double>(r) != *d) throw HyperparamError("expected an integer value");
    return r;
  }
  throw HyperparamError("expected an integer, got string '" + std::get<std::string>(v) + "'");
}

inline const std::string& as_string(const ParamValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw HyperparamError("expected a string value");
}

inline std::string to_string(const ParamValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else {
          return nlohmann::json(x).dump();
        }
      },
      v);
}

inline nlohmann::json to_json(const ParamValue& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

inline ParamValue param_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return static_cast<std::int64_t>(j.get<bool>());
  throw HyperparamError("unsupported parameter value: " + j.dump());
}

inline nlohmann::json to_json(const ParamMap& m) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : m) out[k] = to_json(v);
  return out;
}

inline ParamMap params_from_json(const nlohmann::json& j) {
  ParamMap out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw HyperparamError("hyperparameters must be a JSON object");
  for (const auto& [k, v] : j.items()) out[k] = param_from_json(v);
  return out;
}

}  // namespace vaforge
