#pragma once

#include <stdexcept>
#include <string>

namespace esld {

// Base for every error raised by the library. Subclasses narrow the cause so
// callers (and the CLI) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated on-disk data (feature files, manifests, JSONL).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Vector/matrix shapes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf where only finite values are allowed.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Data that cannot support a fit (e.g. constant features, too few rows).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

// Source pool or fold structure violates a protocol precondition.
class PoolError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for the given inputs (e.g. single-class labels).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Missing input files, verdicts or features.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

// Bad command-line or configuration values.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace esld
