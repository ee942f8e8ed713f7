#pragma once

#include <stdexcept>
#include <string>

namespace wnash {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A family parameter lies outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of an operation (t <= 0, x outside
/// the truncation window, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Grid with a zero node mass or fewer than three nodes.
class DegenerateGridError : public Error {
 public:
  using Error::Error;
};

/// Iterative numerics failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Grid functions, weights or operators of incompatible sizes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition on the input data does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The Lyapunov expression is not bounded above on the window.
class NoCertificateError : public Error {
 public:
  using Error::Error;
};

/// 1/phi is not integrable at infinity, or a weight is not square
/// integrable.
class IntegrabilityError : public Error {
 public:
  using Error::Error;
};

/// An empirical rate could not be fitted to the sampled quotients.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// A piecewise-linear envelope could not be inverted.
class InversionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace wnash
