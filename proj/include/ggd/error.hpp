#pragma once

#include <stdexcept>
#include <string>

namespace ggd {

// Base class for every error raised by the library. The CLI maps any Error
// to a nonzero exit code with a one-line diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree (matmul inner dims, empty vectors, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (log of a
// non-positive value, non-positive temperature, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed user input: out-of-vocabulary ids, misaligned corpus files,
// missing end-of-sentence markers.
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Violated API contract between library components.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Unreadable, truncated or foreign checkpoint file.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// A forward value became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ggd
