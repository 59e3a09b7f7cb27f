#pragma once

#include <stdexcept>
#include <string>

namespace lidar {

/// Argument outside the domain where an operation is defined.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// The integrand was asked for a value at one of its singular points.
class SingularPointError : public DomainError {
public:
  using DomainError::DomainError;
};

/// Collision at a height where the medium does not scatter.
class NoScatterError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Adaptive quadrature ran out of subdivisions before reaching tolerance.
/// Carries the best estimate so callers can still report it.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string &what, double estimate, double error)
      : std::runtime_error(what), estimate_(estimate), error_(error) {}

  double estimate() const noexcept { return estimate_; }
  double error() const noexcept { return error_; }

private:
  double estimate_;
  double error_;
};

} // namespace lidar
