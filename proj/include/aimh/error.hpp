#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aimh {

enum class ErrorKind {
  DimensionMismatch,
  InvalidArgument,
  NonFinite,
  NotPositiveDefinite,
  MissingCapability,
  SupportViolation,
  ContainmentViolation,
  Unnormalized,
  CorruptArtifact,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. `kind()` lets callers branch on the
/// category without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::NotPositiveDefinite: return "not-positive-definite";
    case ErrorKind::MissingCapability: return "missing-capability";
    case ErrorKind::SupportViolation: return "support-violation";
    case ErrorKind::ContainmentViolation: return "containment-violation";
    case ErrorKind::Unnormalized: return "unnormalized";
    case ErrorKind::CorruptArtifact: return "corrupt-artifact";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

}  // namespace aimh
