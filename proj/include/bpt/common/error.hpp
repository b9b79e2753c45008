#pragma once

#include <stdexcept>
#include <string>

namespace bpt {

/// Tensor or layer geometry that cannot be evaluated.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input that violates a documented precondition (configs, plans, messages).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while executing work (non-finite values, executor faults, aborted runs).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bpt
