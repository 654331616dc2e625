#pragma once

#include <stdexcept>
#include <string>

namespace perfseg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad parameters, missing model files, unusable configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be processed (degenerate histograms, too few
/// samples, inconsistent shapes).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file that does not match its declared layout.
class MalformedInputError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace perfseg
