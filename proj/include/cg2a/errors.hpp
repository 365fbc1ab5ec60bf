#pragma once

#include <stdexcept>
#include <string>

namespace cg2a {

// Shapes, lengths or indices that do not line up.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf where finite values are required.
class NumericInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Calls made out of order, e.g. stepping a finished episode.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Run-configuration problems. `field` is the dotted key path at fault.
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

}  // namespace cg2a
