#pragma once

#include <stdexcept>
#include <string>

namespace difw {

// Error categories. The CLI maps each to a distinct exit code.

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OutOfDomain : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised by file readers; carries "<file>:<line>: <message>".
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace difw
