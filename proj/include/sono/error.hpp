#pragma once

#include <stdexcept>
#include <string>

namespace sono {

// Base of every error raised by the library. The CLI maps the concrete type
// onto an exit code, so new failure kinds should get their own subclass.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input table (ragged rows, unreadable file, bad probability file).
class IngestionError : public Error {
 public:
  using Error::Error;
};

// No observations left after cleaning.
class EmptyDataset : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of an operation (level code, probability, alpha).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A truncated Poisson with no mass, or a sum with zero variance.
class DegenerateTruncation : public Error {
 public:
  using Error::Error;
};

// The c sweep reached n without bracketing the requested confidence level.
class CISearchFailure : public Error {
 public:
  using Error::Error;
};

// A contingency table with more cells than the configured cap.
class TableExplosion : public Error {
 public:
  using Error::Error;
};

// Flags and thresholds disagree (e.g. a flagged frequent itemset with sigma <= 0).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Input outside the caps of a reference-oracle routine.
class OracleRefusal : public Error {
 public:
  using Error::Error;
};

}  // namespace sono
