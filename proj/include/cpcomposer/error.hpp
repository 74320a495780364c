#pragma once

#include <stdexcept>
#include <string>

namespace cpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition on an argument does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or text.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Two constraint entries demand incompatible things of the same node or pair.
class ConflictError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure produced NaN or infinity.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpc
