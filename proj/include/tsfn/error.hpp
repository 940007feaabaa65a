#pragma once

#include <stdexcept>
#include <string>

namespace tsfn {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or layout mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite input to a numeric primitive.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration, index or contract violation by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing, truncated or malformed data on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced during training or evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsfn
