#pragma once

#include <stdexcept>
#include <string>

namespace nkpcast {

// Error codes shared with the C API (see nkpcast.h).
enum class ErrorCode : int {
  Ok = 0,
  InvalidArgument = 1,
  PoleProximity = 2,
  InvalidDt = 3,
  TooShort = 4,
  LengthMismatch = 5,
  EmptyInput = 6,
  Degenerate = 7,
  MissingColumn = 8,
  OutOfBounds = 9,
  InsufficientLabels = 10,
  EmptyDb = 11,
  ShapeMismatch = 12,
  InvalidConfig = 13,
  InvalidDistribution = 14,
  VersionMismatch = 15,
  CorruptFile = 16,
  IoError = 17,
  Internal = 18,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace nkpcast
