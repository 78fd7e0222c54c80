#pragma once

#include <stdexcept>
#include <string>

namespace uad {

/// Shape or rank disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Value outside an operator's mathematical domain (e.g. log of a non-positive number).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// API misuse: backward on a non-scalar, empty calibration split, bad arguments.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Non-finite values during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed key=value configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Binary file that was readable but not well formed.
struct ParseError : std::runtime_error {
  enum class Kind { BadMagic, VersionMismatch, Truncated, Malformed };
  ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
  Kind kind;
};

}  // namespace uad
