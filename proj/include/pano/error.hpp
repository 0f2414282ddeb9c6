#pragma once

#include <stdexcept>
#include <string>

namespace pano {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a precondition (shape, range, sign).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A map has zero spread (max == min, zero MAD, zero median) where a spread is required.
class DegenerateMap : public Error {
 public:
  using Error::Error;
};

/// Fewer valid samples than a statistic needs.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// No pixel survives the evaluation mask.
class EmptyEvaluation : public Error {
 public:
  using Error::Error;
};

/// Unreadable, malformed or inconsistent files and manifests.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent run configuration (ratios, empty pools, bad flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Teacher backend failure (bridge process down, protocol violation).
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace pano
