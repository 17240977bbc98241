#pragma once

#include <stdexcept>
#include <string>

namespace jobgen {

// Raised for malformed or inconsistent configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a pipeline stage is started before the artifacts it consumes exist.
class MissingPrerequisite : public std::runtime_error {
 public:
  explicit MissingPrerequisite(std::string artifact)
      : std::runtime_error("missing prerequisite: " + artifact), artifact_(std::move(artifact)) {}
  const std::string& artifact() const noexcept { return artifact_; }

 private:
  std::string artifact_;
};

// Raised when a loss, gradient or parameter stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for shape mismatches and other invalid tensor operations.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace jobgen
