#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace platoon {

// Argument lies outside the set where a function is defined (collision
// region, speeds outside the box, densities outside (0, rho_max)).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller-side contract violation that is not a plain domain issue.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IntegrationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// A SmoothProfile's declared bound was not large enough to bracket a root.
class ProfileBoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverBlowup : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string out;
    for (const auto& e : errors) {
      if (!out.empty()) out += "; ";
      out += e;
    }
    return out;
  }

  std::vector<std::string> errors_;
};

}  // namespace platoon
