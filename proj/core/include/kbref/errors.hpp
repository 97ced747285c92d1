#pragma once

#include <stdexcept>
#include <string>

namespace kbref {

// Base class for all recoverable errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid flags, config keys or argument combinations. CLI exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data. CLI exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor shape disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A numeric operation produced NaN/Inf, or a loss went non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace kbref
