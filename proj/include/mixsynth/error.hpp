#pragma once

#include <stdexcept>
#include <string>

namespace mixsynth {

/// Bad input supplied by the caller: shapes, ranges, malformed files.
/// The CLI maps these to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes incompatible with an op-kind.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A model/param/score file parsed but does not match its schema.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Failure while running a computation (divergence, I/O). Exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mixsynth
