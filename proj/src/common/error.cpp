#include "vpure/common/error.hpp"

namespace vpure {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kState: return "state error";
    case ErrorKind::kDegenerate: return "degenerate input";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kLookup: return "lookup error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kCheckpointMismatch: return "checkpoint mismatch";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

}  // namespace vpure
