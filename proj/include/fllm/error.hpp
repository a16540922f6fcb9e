#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fllm {

enum class ErrorCode {
  invalid_argument,
  io,
  parse,
  validation,
  not_found,
  transport,
  backend,
  version,
  budget,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::validation: return "validation";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::transport: return "transport";
    case ErrorCode::backend: return "backend";
    case ErrorCode::version: return "version";
    case ErrorCode::budget: return "budget";
  }
  return "unknown";
}

/// Every failure raised by the library carries a code so callers (the CLI,
/// the HTTP service) can map it to an exit status or response status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fllm
