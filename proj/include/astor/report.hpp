#pragma once

#include <cmath>
#include <string>

#include "json.hpp"

namespace astor {

/// Report numbers never appear bare: each carries its tolerance or context.
inline nlohmann::json num(double value, const std::string& context) {
  nlohmann::json j{{"value", value}, {"context", context}};
  if (!std::isfinite(value)) j["value"] = std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
  return j;
}

inline nlohmann::json num(double value, double tolerance, const std::string& context) {
  nlohmann::json j = num(value, context);
  j["tolerance"] = tolerance;
  j["pass"] = std::isfinite(value) && value <= tolerance;
  return j;
}

}  // namespace astor
