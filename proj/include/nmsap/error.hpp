#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nmsap {

enum class ErrorKind {
  Parse,        // malformed JSON or text input
  Schema,       // well-formed input with missing or mistyped fields
  Referential,  // ids that do not resolve, duplicate ids
  Validation,   // values that violate a domain invariant
  Io,           // unreadable or unwritable files
  Usage,        // bad arguments or configuration
};

constexpr std::string_view prefix(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parse: return "parse error: ";
    case ErrorKind::Schema: return "schema error: ";
    case ErrorKind::Referential: return "referential-integrity error: ";
    case ErrorKind::Validation: return "validation error: ";
    case ErrorKind::Io: return "io error: ";
    case ErrorKind::Usage: return "usage error: ";
  }
  return "error: ";
}

/// Every failure raised by the library. what() carries the kind prefix so
/// messages can be surfaced verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(prefix(kind)) + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nmsap
