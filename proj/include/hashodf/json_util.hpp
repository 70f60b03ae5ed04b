#pragma once

#include "hashodf/errors.hpp"

#include <json.hpp>

#include <initializer_list>
#include <string>

namespace hashodf {

/// ConfigError naming the first key of `j` not in `allowed`.
inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

/// j[key] converted to T if present, ConfigError on a type mismatch.
template <typename T>
void read_optional(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace hashodf
