#pragma once

#include <stdexcept>
#include <string>

namespace fluctua {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not defined for the given model variant.
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

/// Argument outside tabulated or supported range.
class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

/// Precondition on a numeric argument violated.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared while evaluating an integrand.
class NumericalDomainError : public Error {
 public:
  using Error::Error;
};

/// Multiple-scattering operator (1 - R R) is singular on the grid.
class ResonanceError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double worst_a, double worst_b, double worst_error)
      : Error(what), worst_a_(worst_a), worst_b_(worst_b), worst_error_(worst_error) {}
  double worst_a() const { return worst_a_; }
  double worst_b() const { return worst_b_; }
  double worst_error() const { return worst_error_; }

 private:
  double worst_a_;
  double worst_b_;
  double worst_error_;
};

/// Invalid run configuration; `field` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace fluctua
