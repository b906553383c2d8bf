#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crnn {

enum class ErrorCode {
  kInvalidInput,
  kDimensionMismatch,
  kIndexOutOfRange,
  kNumerical,
  kUnstableModel,
  kBoundary,
  kUndefinedRadius,
  kInfeasibleConstraint,
  kUnsupportedDimension,
  kDeformation,
  kPlan,
  kDiverged,
  kFormat,
  kIo,
  kConfig,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` tells callers (and the CLI
/// exit-code mapping) what went wrong.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace crnn
