#pragma once

#include <stdexcept>
#include <string>

namespace tflc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed arguments that violate an operation's preconditions.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Shapes or dimensions of two operands disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Bad command line or config combination (CLI exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw PreconditionError(what);
}

inline void require_dims(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

}  // namespace tflc
