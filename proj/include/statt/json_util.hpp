#pragma once

#include <initializer_list>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "statt/errors.hpp"

namespace statt::json_util {

using nlohmann::json;

/// Reads typed fields out of a JSON object, reporting failures as
/// ConfigError with the full field path ("/train/batch_size").
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected a JSON object");
  }

  template <typename V>
  V get(const std::string& key, V fallback) const {
    auto it = object_.find(key);
    if (it == object_.end()) return fallback;
    return convert<V>(*it, key);
  }

  template <typename V>
  V require(const std::string& key) const {
    auto it = object_.find(key);
    if (it == object_.end()) throw ConfigError(field(key), "required field is missing");
    return convert<V>(*it, key);
  }

  bool has(const std::string& key) const { return object_.contains(key); }
  const json& raw(const std::string& key) const { return object_.at(key); }
  std::string field(const std::string& key) const { return path_ + "/" + key; }

  /// Rejects keys outside `allowed`.
  void reject_unknown(std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!ok.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
    }
  }

 private:
  template <typename V>
  V convert(const json& j, const std::string& key) const {
    if constexpr (std::is_same_v<V, bool>) {
      if (!j.is_boolean()) throw ConfigError(field(key), "expected a boolean");
    } else if constexpr (std::is_integral_v<V> && std::is_unsigned_v<V>) {
      if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(field(key), "expected a non-negative integer");
    } else if constexpr (std::is_integral_v<V>) {
      if (!j.is_number_integer()) throw ConfigError(field(key), "expected an integer");
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!j.is_number()) throw ConfigError(field(key), "expected a number");
    } else if constexpr (std::is_same_v<V, std::string>) {
      if (!j.is_string()) throw ConfigError(field(key), "expected a string");
    }
    try {
      return j.get<V>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  const json& object_;
  std::string path_;
};

}  // namespace statt::json_util
