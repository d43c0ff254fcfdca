#pragma once

#include <stdexcept>
#include <string>

namespace ssmrom {

// Bad user input: dimension mismatches, invalid ranges, malformed configs.
class ArgumentError : public std::invalid_argument {
public:
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Regression matrix is rank deficient or the data cannot support the fit.
class SingularFitError : public std::runtime_error {
public:
  explicit SingularFitError(const std::string& msg) : std::runtime_error(msg) {}
};

// Iterative solver exhausted its iteration budget. Carries the residual it
// reached so callers can decide whether the partial result is usable.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& msg, double residual)
      : std::runtime_error(msg), residual(residual) {}
  double residual;
};

// Exact resonance hit where a nonzero denominator was assumed.
class ResonanceError : public std::runtime_error {
public:
  explicit ResonanceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Trajectory integration produced a non-finite state.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(const std::string& msg, double last_finite_time)
      : std::runtime_error(msg), last_finite_time(last_finite_time) {}
  double last_finite_time;
};

// Model has a structure the requested operation does not support
// (e.g. cross-mode resonant coupling in a polar conversion).
class UnsupportedStructureError : public std::runtime_error {
public:
  explicit UnsupportedStructureError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ssmrom
