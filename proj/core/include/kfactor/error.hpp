#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kf {

// Error taxonomy shared by every module. Callers that only care about
// "something went wrong" can catch std::runtime_error / std::invalid_argument.

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IncompatibleFactor : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a loss component becomes non-finite during optimization.
class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(std::string component, std::size_t step)
      : std::runtime_error("training diverged: non-finite '" + component + "' at step " +
                           std::to_string(step)),
        component_(std::move(component)),
        step_(step) {}

  const std::string& component() const noexcept { return component_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::string component_;
  std::size_t step_;
};

/// Config validation failure; `field` is the dotted path, e.g. "factorization.alpha".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config error at '" + field + "': " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A pipeline stage was requested without its upstream artifact on disk.
class DependencyError : public std::runtime_error {
 public:
  DependencyError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace kf
