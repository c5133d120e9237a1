#pragma once

#include <stdexcept>
#include <string>

namespace skewnet {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad hyperparameters, inconsistent experiment
/// settings, augmentation plans that break the synthetic-count cap.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Augmentation plan requesting as many or more synthetic rows than originals.
class CapViolationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Bad input data: out-of-range labels, non-finite features, malformed files.
class DataError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class IndexError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values reached the optimizer.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// backward() called without a matching cached forward pass.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace skewnet
