#pragma once

#include <stdexcept>
#include <string>

namespace npl {

/// Shapes of inputs, weights and architecture disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on a numeric parameter was violated.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exact path enumeration would exceed the configured cap.
class PathOverflowError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed file contents (IDX, DGN binary, CSV).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (NaN or exploding loss).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace npl
