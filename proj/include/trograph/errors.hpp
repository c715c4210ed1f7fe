#pragma once

#include <stdexcept>
#include <string>

namespace tro {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates a documented precondition or schema. The CLI maps
/// every subclass of this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, int line = -1)
      : ValidationError(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Kinematic tree violations (cycles, multiple parents, dangling links).
class StructureError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Stored graph edges disagree with edges re-derived from nodes.
class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// log_map inside the declared singular band around a rotation angle of pi.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during training or gradient evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tro
