#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace siriib {

enum class ErrorCode {
  kInvalidShape,
  kNonFinite,
  kInvalidArgument,
  kConfig,
  kIo,
  kFormat,
  kVersionMismatch,
  kDescriptorMismatch,
  kUnsupported,
};

std::string_view to_string(ErrorCode code);

/// Structured error carrying a machine-checkable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace siriib
