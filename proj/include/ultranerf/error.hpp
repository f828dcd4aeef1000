#pragma once

#include <stdexcept>
#include <string>

namespace unerf {

/// Incompatible tensor or map shapes; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration or argument values (validated before any work starts).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-rigid or malformed pose.
class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File-level problems: missing files, count mismatches, malformed lines.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure during optimization (e.g. NaN loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unerf
