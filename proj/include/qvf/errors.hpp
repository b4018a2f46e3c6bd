#pragma once

#include <stdexcept>
#include <string>

namespace qvf {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: shape mismatch, bad hyperparameter, unknown key.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Malformed or missing input data (files, samples).
class DataError : public Error {
  public:
    using Error::Error;
};

/// Non-finite values encountered during evaluation or training.
class NumericError : public Error {
  public:
    using Error::Error;
};

/// A gate or operation is not legal for the statevector mode (real vs complex).
class ModeError : public Error {
  public:
    using Error::Error;
};

/// Qubit index out of range.
class IndexError : public Error {
  public:
    using Error::Error;
};

/// API used out of order (e.g. backward without a cached forward pass).
class UsageError : public Error {
  public:
    using Error::Error;
};

} // namespace qvf
