#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ddetect/common.hpp"

namespace ddetect::json_util {

using nlohmann::json;

/// Raised when a JSON document does not match the expected schema. `field`
/// is the dotted path of the offending entry.
class SchemaError : public InvalidArgument {
 public:
  SchemaError(std::string field, const std::string& message)
      : InvalidArgument("field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

inline void expect_object(const json& j, std::string_view where) {
  if (!j.is_object()) throw SchemaError(std::string(where), "expected an object");
}

/// Unknown keys are schema errors, never silently ignored.
inline void allow_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view where) {
  expect_object(j, where);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (auto key : allowed) known = known || key == it.key();
    if (!known) {
      throw SchemaError(where.empty() ? it.key() : std::string(where) + "." + it.key(),
                        "unknown key");
    }
  }
}

template <typename T>
void read_optional(const json& j, const char* key, T& out, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const SchemaError&) {
    throw;
  } catch (const std::exception& e) {
    throw SchemaError(where.empty() ? key : std::string(where) + "." + key, e.what());
  }
}

template <typename T>
void read_required(const json& j, const char* key, T& out, std::string_view where) {
  if (!j.contains(key)) {
    throw SchemaError(where.empty() ? key : std::string(where) + "." + key, "missing");
  }
  read_optional(j, key, out, where);
}

}  // namespace ddetect::json_util
