#pragma once

#include <stdexcept>
#include <string>

namespace mhom {

/// Bad input: parameter out of range, malformed file, unresolvable grid.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not complete (bracketing, convergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-squares fit did not converge; carries the last residual norm.
class FitError : public NumericalError {
 public:
  FitError(const std::string& what, double last_residual)
      : NumericalError(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mhom
