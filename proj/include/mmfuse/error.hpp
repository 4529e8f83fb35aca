#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmfuse {

// Machine-parsable error classes. The CLI prints "error: <class>: <message>".
enum class ErrorKind {
  shape_mismatch,
  invalid_argument,
  non_finite,
  format_magic,
  format_truncated,
  format_width,
  unknown_label,
  empty_split,
  unsupported,
  io,
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::format_magic: return "format_magic";
    case ErrorKind::format_truncated: return "format_truncated";
    case ErrorKind::format_width: return "format_width";
    case ErrorKind::unknown_label: return "unknown_label";
    case ErrorKind::empty_split: return "empty_split";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace mmfuse
