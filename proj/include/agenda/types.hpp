#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace agenda {

using UserId = std::int32_t;
using ItemId = std::int32_t;

/// The private binary attribute being inferred.
enum class UserType : std::int8_t { plus = 1, minus = -1 };

inline int sign(UserType t) { return static_cast<int>(t); }
inline UserType opposite(UserType t) {
  return t == UserType::plus ? UserType::minus : UserType::plus;
}
inline UserType type_from_sign(double s) {
  return s >= 0.0 ? UserType::plus : UserType::minus;
}

struct LabelNames {
  std::string plus = "+1";
  std::string minus = "-1";

  const std::string& name(UserType t) const { return t == UserType::plus ? plus : minus; }
  bool operator==(const LabelNames&) const = default;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace agenda
