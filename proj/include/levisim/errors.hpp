#pragma once

#include <stdexcept>
#include <string>

namespace levisim {

// Iterative solver failed to reach its tolerance. Carries the last
// residual/term norm so callers can report how far it got.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

// Closed-loop trajectory exceeded the configured energy bound.
class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(const std::string& what, double time_s)
      : std::runtime_error(what), time_s_(time_s) {}
  double time() const { return time_s_; }

 private:
  double time_s_;
};

}  // namespace levisim
