#pragma once

#include <stdexcept>
#include <string>

namespace mld {

// Root of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layout dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or violated precondition on a parameter.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File could not be read or written, or its contents are malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mld
