#pragma once

#include <stdexcept>
#include <string>

namespace flowood {

// Error taxonomy mirrored by the CLI exit codes:
//   usage -> 2, data -> 3, numeric/state -> 4
enum class ErrorCategory { usage, data, numeric, state };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

  int exit_code() const noexcept {
    switch (category_) {
      case ErrorCategory::usage:
        return 2;
      case ErrorCategory::data:
        return 3;
      default:
        return 4;
    }
  }

  const char* category_name() const noexcept {
    switch (category_) {
      case ErrorCategory::usage:
        return "usage";
      case ErrorCategory::data:
        return "data";
      case ErrorCategory::numeric:
        return "numeric";
      default:
        return "state";
    }
  }

 private:
  ErrorCategory category_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorCategory::usage, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorCategory::data, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorCategory::numeric, msg); }
inline Error state_error(const std::string& msg) { return Error(ErrorCategory::state, msg); }

}  // namespace flowood
