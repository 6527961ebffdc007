#pragma once

// Internal helpers for schema-checked json access. Every accessor names the
// offending field path in the exception, so a bad manifest or bank file
// points straight at the problem instead of failing with a bare type error.

#include <string>

#include <json.hpp>

#include "ctxbank/errors.hpp"

namespace ctxbank::jsonu {

using Json = nlohmann::ordered_json;

inline const Json& require(const Json& obj, const char* key,
                           const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(path + ": missing required field '" + key + "'");
  }
  return *it;
}

inline std::string require_string(const Json& obj, const char* key,
                                  const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_string()) {
    throw SchemaError(path + "." + key + ": expected a string");
  }
  return v.get<std::string>();
}

inline long long require_int(const Json& obj, const char* key,
                             const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_number_integer()) {
    throw SchemaError(path + "." + key + ": expected an integer");
  }
  return v.get<long long>();
}

inline double require_number(const Json& obj, const char* key,
                             const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_number()) {
    throw SchemaError(path + "." + key + ": expected a number");
  }
  return v.get<double>();
}

inline bool require_bool(const Json& obj, const char* key,
                         const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_boolean()) {
    throw SchemaError(path + "." + key + ": expected a boolean");
  }
  return v.get<bool>();
}

inline const Json& require_array(const Json& obj, const char* key,
                                 const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_array()) {
    throw SchemaError(path + "." + key + ": expected an array");
  }
  return v;
}

inline const Json& require_object(const Json& obj, const char* key,
                                  const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_object()) {
    throw SchemaError(path + "." + key + ": expected an object");
  }
  return v;
}

inline std::string optional_string(const Json& obj, const char* key,
                                   const std::string& path,
                                   const std::string& fallback = {}) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_string()) {
    throw SchemaError(path + "." + key + ": expected a string");
  }
  return v.get<std::string>();
}

inline Json parse_text(const std::string& text, const std::string& what) {
  Json parsed = Json::parse(text, /*cb=*/nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) throw SchemaError(what + ": invalid json");
  return parsed;
}

}  // namespace ctxbank::jsonu
