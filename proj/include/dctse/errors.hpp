#pragma once

#include <stdexcept>
#include <string>

namespace dctse {

// Precondition violated by a caller-supplied value.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file or serialized blob could not be parsed.
class MalformedInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf detected where a finite value is required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An object was used out of sequence (e.g. a stale forward cache).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dctse
