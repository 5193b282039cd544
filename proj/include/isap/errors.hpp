#pragma once

#include <stdexcept>
#include <string>

namespace isap {

/// Bad input: malformed config, wrong shapes, corrupt files. CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// NaN/Inf produced during computation or training divergence. CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace isap
