#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace handshake {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number of the offending line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// Inputs violate a documented precondition (shapes, sizes, versions, ranges).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Skeleton geometry that cannot produce a frame or angle set.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Singular systems, non-finite losses and similar numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage ended with nothing usable (e.g. no accepted trajectories).
class PipelineError : public Error {
 public:
  using Error::Error;
};

void warn(const std::string& message);

}  // namespace handshake
