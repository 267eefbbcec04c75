#include "dfcurate/error.hpp"

namespace dfcurate {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kCountMismatch: return "count mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kDuplicateId: return "duplicate id";
    case ErrorCode::kUnknownId: return "unknown id";
    case ErrorCode::kDimMismatch: return "dimension mismatch";
    case ErrorCode::kSingleClass: return "single-class input";
    case ErrorCode::kEmptyPool: return "empty pool";
    case ErrorCode::kEmptyGroup: return "empty group";
    case ErrorCode::kUnsupportedFormat: return "unsupported format";
    case ErrorCode::kSilentInput: return "silent input";
    case ErrorCode::kToolNotFound: return "tool not found";
    case ErrorCode::kToolFailed: return "tool failed";
    case ErrorCode::kConfig: return "config error";
  }
  return "error";
}

}  // namespace dfcurate
