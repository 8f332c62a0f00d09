#pragma once

#include <stdexcept>
#include <string>

namespace statt {

// Error taxonomy. The CLI maps each family onto a stable exit code:
// ConfigError/ContractError/DimensionError -> 2, IoError -> 3,
// NumericalError -> 4.

/// Shape disagreement between operands. The message names the offending axes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller violated a documented precondition (non-scalar backward root,
/// empty loss, T < 2, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid user configuration. `field` is a JSON-pointer-like path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace statt
