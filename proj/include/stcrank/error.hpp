#pragma once

#include <stdexcept>
#include <string>

namespace stcrank {

// Every failure raised by the library derives from Error so the CLI can map
// categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Raised when an exhaustive search would exceed its permutation cap.
class RefusalError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was asked to run before the stage producing its input.
class DependencyError : public Error {
 public:
  DependencyError(const std::string& missing_step, const std::string& detail)
      : Error("missing upstream artifact from step '" + missing_step + "': " + detail),
        missing_step_(missing_step) {}

  const std::string& missing_step() const noexcept { return missing_step_; }

 private:
  std::string missing_step_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace stcrank
