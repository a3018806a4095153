#pragma once

#include <stdexcept>
#include <string>

namespace tfnet {

// Base of every error the library throws. The CLI maps the concrete type to
// an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layer shapes do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside its mathematical domain (e.g. lambda > 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (images, annotations, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or other numerical breakdown during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tfnet
