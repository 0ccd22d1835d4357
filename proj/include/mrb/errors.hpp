#pragma once

#include <stdexcept>
#include <string>

namespace mrb {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes do not satisfy an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf appeared where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Model / training / CLI configuration violates an invariant.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (labels, corpus lines, vectors).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Binary file format problems. Subclasses let callers tell them apart.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TrailingDataError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File is well-formed but disagrees with the configuration it carries.
class ConsistencyError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace mrb
