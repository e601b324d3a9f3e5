#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "trajid/errors.hpp"

namespace trajid::detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
  }
}

inline void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                               const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || item.key() == k;
    if (!known) throw ConfigError(std::string("unknown field '") + item.key() + "' in " + where);
  }
}

}  // namespace trajid::detail
