#pragma once

#include <stdexcept>
#include <string>

namespace otalign {

// Malformed or inconsistent arguments (shapes, weights, flags).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A solve that did not reach the marginal tolerance where one is required.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable, truncated or corrupt files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace otalign
