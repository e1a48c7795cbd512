#include "tmkt/errors.hpp"

namespace tmkt {

std::string_view category_name(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::Usage: return "usage";
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Format: return "format";
    case ErrorCategory::Domain: return "domain";
    case ErrorCategory::Infeasible: return "infeasible";
    case ErrorCategory::Numeric: return "numeric";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Config: return 3;
    case ErrorCategory::Data:
    case ErrorCategory::Format: return 4;
    case ErrorCategory::Numeric: return 5;
    case ErrorCategory::Domain:
    case ErrorCategory::Infeasible: return 6;
  }
  return 1;
}

}  // namespace tmkt
