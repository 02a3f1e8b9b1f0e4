#pragma once

#include <stdexcept>
#include <string>

namespace arae {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index (token id, class id, coordinate) is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A value became NaN/Inf or an evaluation was otherwise non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unrecognised file layout (bad magic, unsupported version, malformed header).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File layout recognised but its content is truncated or inconsistent.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint or bundle does not match the requested architecture.
class ArchitectureError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Too few samples to build a statistic.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace arae
