#pragma once

#include <stdexcept>
#include <string>

namespace hcal {

// Base of every exception thrown by the library. The subclasses map onto the
// CLI exit codes: ConfigError -> 1, DataError -> 2, NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data, I/O failures, shape mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values, degenerate vectors, undefined logarithms.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace hcal
