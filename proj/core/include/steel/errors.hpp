#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace steel {

// Non-finite values where finite math was required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, truncated, or version-mismatched artifact files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad run configuration (CLI flags, config files, missing artifacts named
// in a config).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unreadable artifact (zoo, checkpoint, hypothesis set).
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged. Carries the last parameter vector that was still finite
// so callers can inspect or salvage it.
class TrainingFailure : public NumericError {
 public:
  TrainingFailure(const std::string& what, std::vector<double> last_finite)
      : NumericError(what), last_finite_(std::move(last_finite)) {}

  const std::vector<double>& last_finite() const { return last_finite_; }

 private:
  std::vector<double> last_finite_;
};

}  // namespace steel
