#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dfcurate {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kFormat,
  kCountMismatch,
  kNonFinite,
  kDuplicateId,
  kUnknownId,
  kDimMismatch,
  kSingleClass,
  kEmptyPool,
  kEmptyGroup,
  kUnsupportedFormat,
  kSilentInput,
  kToolNotFound,
  kToolFailed,
  kConfig,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can branch on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dfcurate
