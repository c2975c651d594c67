#pragma once

#include <stdexcept>
#include <string>

namespace greenlab {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Input data is internally inconsistent (disconnected mask, non-elliptic
/// coefficients, grid mismatch, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An iterative or direct solve did not produce an acceptable answer.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace greenlab
