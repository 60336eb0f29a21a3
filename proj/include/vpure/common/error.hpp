#pragma once

#include <stdexcept>
#include <string>

namespace vpure {

enum class ErrorKind {
  kInvalidInput,
  kState,
  kDegenerate,
  kFormat,
  kLookup,
  kConfig,
  kData,
  kCheckpointMismatch,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_input(const std::string& what) {
  return Error(ErrorKind::kInvalidInput, what);
}
inline Error format_error(const std::string& what) {
  return Error(ErrorKind::kFormat, what);
}

}  // namespace vpure
