#pragma once

#include <stdexcept>
#include <string>

namespace histaid {

// Base for every error raised by the library. The CLI maps subclasses onto
// exit codes (see ExitCode in tools/histaid).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or combination.
class ConfigError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Tensor dimensions do not agree.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A value became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A softmax row had no unmasked entry.
class DegenerateMaskError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Metric is undefined for the given labels (e.g. AUROC on a single class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Malformed input row in a delimiter-separated table.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Binary file does not carry the expected header.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Binary file header is valid but the body is truncated or has trailing bytes.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// A sample would see data at or after its anchor timestamp.
class LeakageError : public Error {
 public:
  using Error::Error;
};

}  // namespace histaid
