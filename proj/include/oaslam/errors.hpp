#pragma once

#include <stdexcept>
#include <string>

namespace oaslam {

// Root of every error the library raises. Exit code mapping for the CLI
// lives in exit_code().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input (bad pixel, bad config value, parse error).
class InputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class DegenerateEmbeddingError : public InputError {
 public:
  using InputError::InputError;
};

// Bearing outside the sonar fan. Distinct from a no-return.
class OutOfFovError : public InputError {
 public:
  using InputError::InputError;
};

class GatingError : public Error {
 public:
  using Error::Error;
};

class UndefinedHeadingError : public InputError {
 public:
  using InputError::InputError;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class OptimizationFailure : public SolverError {
 public:
  using SolverError::SolverError;
};

class CovarianceUnavailable : public SolverError {
 public:
  using SolverError::SolverError;
};

class EmptyMapError : public InputError {
 public:
  using InputError::InputError;
};

// 2 for solver failures, 1 for everything else.
inline int exit_code(const std::exception& e) {
  return dynamic_cast<const SolverError*>(&e) != nullptr ? 2 : 1;
}

}  // namespace oaslam
