#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace testbed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

/// Raised when tensor shapes do not line up (input width vs layer fan-in, etc).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when a scalar argument is outside its mathematical domain.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation is called in a way its contract forbids
/// (empty dataset, oversized instance, missing baseline, ...).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised by file readers (CSV, config) with position context in the message.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace testbed
