#pragma once

#include <set>
#include <string>

#include "fscd/errors.hpp"
#include "json.hpp"

namespace fscd::detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T required(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
  }
}

template <typename T>
T optional(const nlohmann::json& obj, const char* key, T fallback, const std::string& where) {
  return obj.contains(key) ? required<T>(obj, key, where) : fallback;
}

nlohmann::json read_json_file(const std::string& path, const char* what);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace fscd::detail
