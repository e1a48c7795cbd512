#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tmkt {

enum class ErrorCategory {
  Usage,       // bad command-line invocation
  Config,      // invalid or missing run configuration
  Data,        // dataset/pairing problems
  Format,      // corrupted or mismatched binary files
  Domain,      // argument outside the mathematical domain
  Infeasible,  // no solution exists for the requested target
  Numeric,     // non-finite values, degenerate inputs
};

std::string_view category_name(ErrorCategory category) noexcept;

/// Process exit code used by the CLI for each category.
int exit_code(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Zero-variance features passed to CKA; callers may skip the affected step.
class DegenerateInput : public Error {
 public:
  explicit DegenerateInput(const std::string& message) : Error(ErrorCategory::Numeric, message) {}
};

/// Raised by solve_p when the requested ratio is below the feasible bound.
class InfeasibleRatio : public Error {
 public:
  InfeasibleRatio(const std::string& message, double lower_bound)
      : Error(ErrorCategory::Infeasible, message), lower_bound_(lower_bound) {}
  double lower_bound() const noexcept { return lower_bound_; }

 private:
  double lower_bound_;
};

}  // namespace tmkt
