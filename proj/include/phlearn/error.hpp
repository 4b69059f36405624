#pragma once

#include <stdexcept>
#include <string>

namespace phlearn {

// Precondition violations: malformed input, broken type invariants.
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical breakdown: overflow, failed internal postconditions.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace phlearn
