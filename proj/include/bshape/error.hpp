#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bshape {

enum class ErrorCode {
  // tract file readers
  MalformedHeader,
  IndexOutOfRange,
  ShortStreamline,
  TruncatedFile,
  BadMagic,
  BadVersion,
  InvalidBundle,
  // geometry
  DegenerateBundle,
  DegenerateSpan,
  // statistics
  ZeroVariance,
  ZeroVarianceColumn,
  ZeroVarianceDiffs,
  OutOfRange,
  // network
  ShapeMismatch,
  CorruptCheckpoint,
  // plumbing
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShortStreamline: return "ShortStreamline";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::InvalidBundle: return "InvalidBundle";
    case ErrorCode::DegenerateBundle: return "DegenerateBundle";
    case ErrorCode::DegenerateSpan: return "DegenerateSpan";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorCode::ZeroVarianceDiffs: return "ZeroVarianceDiffs";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above, so
/// callers can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace bshape
