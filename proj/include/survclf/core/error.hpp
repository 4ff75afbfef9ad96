#pragma once

#include <stdexcept>
#include <string>

namespace survclf {

// Invalid configuration, unknown options, missing keys. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data problems: missing or malformed files, unsatisfiable cohorts,
// models that do not exist yet. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace survclf
