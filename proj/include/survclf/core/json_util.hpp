#pragma once

#include <string>

#include <json.hpp>

#include "survclf/core/error.hpp"

namespace survclf::jsonu {

using nlohmann::json;

// Dotted path of the key for messages, e.g. "cohort.window_days".
inline std::string path(const std::string& ctx, const std::string& key) {
  return ctx.empty() ? key : ctx + "." + key;
}

inline const json& require(const json& j, const std::string& key, const std::string& ctx = "") {
  if (!j.is_object()) throw ConfigError("'" + (ctx.empty() ? std::string("config") : ctx) + "' must be an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError("missing required key '" + path(ctx, key) + "'");
  return *it;
}

template <class T>
T get(const json& j, const std::string& key, const std::string& ctx = "") {
  const auto& v = require(j, key, ctx);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + path(ctx, key) + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& ctx = "") {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key, ctx);
}

}  // namespace survclf::jsonu
