#pragma once

#include <stdexcept>
#include <string>

namespace modecon {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or architectures that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or precondition on user-supplied values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A required input file or artifact is absent, unreadable or altered.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, non-convergence or numerical breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Feature not supported for the given architecture (e.g. bounds on residual nets).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace modecon
