#pragma once

#include <stdexcept>
#include <string>

namespace lsgp {

/// Raised when an argument lies outside the domain an operation is defined on.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure fails to reach its target accuracy.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double achieved = 0.0)
      : std::runtime_error(what), achieved_(achieved) {}

  /// Accuracy actually reached (relative error estimate, or worst pivot).
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

}  // namespace lsgp
