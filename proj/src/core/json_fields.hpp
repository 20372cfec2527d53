#pragma once

// Strict field reader over a JSON object: every key must be consumed, types
// must match, and errors name the dotted path of the offending field.

#include <json.hpp>
#include <optional>
#include <set>
#include <string>

#include "core/error.hpp"

namespace md {

class JsonFields {
 public:
  JsonFields(const nlohmann::json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    require(obj_.is_object(), ErrorKind::Config, where() + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    out = convert<T>(obj_.at(key), key);
  }

  template <typename T>
  void read_required(const char* key, T& out) {
    require(obj_.contains(key), ErrorKind::Config, where(key) + ": missing required field");
    read(key, out);
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!obj_.contains(key) || obj_.at(key).is_null()) return;
    out = convert<T>(obj_.at(key), key);
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  // Rejects keys that no read() asked for.
  void finish() const {
    for (const auto& [key, _] : obj_.items())
      require(seen_.contains(key), ErrorKind::Config, where(key) + ": unknown key");
  }

 private:
  template <typename T>
  T convert(const nlohmann::json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      require(v.is_boolean(), ErrorKind::Config, where(key) + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), ErrorKind::Config,
              where(key) + ": expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      require(v.is_number_integer(), ErrorKind::Config, where(key) + ": expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      require(v.is_number(), ErrorKind::Config, where(key) + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      require(v.is_string(), ErrorKind::Config, where(key) + ": expected a string");
    }
    return v.get<T>();
  }

  const nlohmann::json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace md
