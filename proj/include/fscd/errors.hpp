#pragma once

#include <stdexcept>
#include <string>

namespace fscd {

// Every failure surfaced by the library derives from Error so callers (the
// CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function (log of 0, theta = 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Key or index outside a table.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration or input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse that no configuration could make valid.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or incompatible file on disk.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace fscd
