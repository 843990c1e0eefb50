#pragma once

#include <stdexcept>
#include <string>

namespace ctsketch {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: bad axis, shape mismatch, wrong arity.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a numerical breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A dense object would exceed the configured element budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Invalid task configuration or program graph.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent internal state, e.g. a tape replayed against the wrong graph.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctsketch
