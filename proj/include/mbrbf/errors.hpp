#pragma once

#include <stdexcept>
#include <string>

namespace mbrbf {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, version, rank).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File payload shorter or longer than its header announces.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Manifest or dataset content failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, gradient, or radius. Training aborts on this.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Batch iteration over an empty split.
class IterationError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Broken internal contract, e.g. a forward cache used after the model changed.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mbrbf
