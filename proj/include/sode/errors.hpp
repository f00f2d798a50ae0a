#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sode {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad scene files, mismatched dimensions, points outside a
/// field's domain, non-vertical vectors handed to K.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Expression text that does not conform to the grammar.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : ValidationError(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Mathematical domain violation while evaluating a field (log of a
/// nonpositive number, division by zero, a parameter outside the maximal
/// interval of a geodesic).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: degenerate Hessians, singular Jacobians, Newton
/// iterations that do not converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace sode
