#pragma once

#include <stdexcept>
#include <string>

namespace textdestroyer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-facing configuration (bad ranges, unknown layer ids, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke a precondition: shape mismatch, out-of-range timestep.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Stored artifacts (trajectories, KV records) are missing or inconsistent.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A backend call failed; carries the pipeline step it failed at.
class BackendError : public Error {
 public:
  BackendError(int step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

// Raised by k-means when the input has fewer than k distinct values.
class DegenerateClustering : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace textdestroyer
