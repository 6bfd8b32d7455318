#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scvae {

enum class ErrorCode {
  DimensionMismatch,
  IsolatedRegion,
  NotPositiveDefinite,
  InvalidArgument,
  NonFiniteLoss,
  NonFiniteGradient,
  Diverged,
  TooFewRegions,
  SingleClass,
  InsufficientSeeds,
  UnknownColumn,
  UnknownRegion,
  ParseError,
  SchemaError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IsolatedRegion: return "IsolatedRegion";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::TooFewRegions: return "TooFewRegions";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::InsufficientSeeds: return "InsufficientSeeds";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::UnknownRegion: return "UnknownRegion";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class so callers
/// (and tests) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace scvae
