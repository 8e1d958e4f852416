#pragma once

#include <stdexcept>
#include <string>

namespace smartmask {

// Precondition violations on physical quantities (negative diameters,
// out-of-range time steps, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid scenario or component configuration. `field()` is a JSON-pointer
// style path to the offending entry when one is known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace smartmask
