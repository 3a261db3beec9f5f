// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace spde {

/// Vectors, bases, grids or weights of incompatible size.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of an operation (negative time, empty grid, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Quadrature grid too coarse to resolve the retained modes.
class AliasingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A coefficient set failed one of its declared-constant checks.
class HypothesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The implicit per-step solve did not reach tolerance.
class NonconvergenceError : public std::runtime_error {
 public:
  NonconvergenceError(const std::string& what, double time, double residual)
      : std::runtime_error(what), time_(time), residual_(residual) {}
  double time() const noexcept { return time_; }
  double residual() const noexcept { return residual_; }

 private:
  double time_;
  double residual_;
};

/// Picard differences stopped decreasing.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spde
