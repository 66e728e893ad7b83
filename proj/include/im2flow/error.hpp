#pragma once

#include <stdexcept>
#include <string>

namespace im2flow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, shape or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file is missing, unreadable, truncated or malformed.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A persisted artifact carries an unsupported format version.
class VersionError : public InputError {
 public:
  using InputError::InputError;
};

/// NaN/Inf in data or in an optimization objective.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace im2flow
