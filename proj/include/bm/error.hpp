// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bm {

// Every failure surfaced by the library carries one of these codes. The CLI
// maps any of them to a nonzero exit status; the wire protocol carries the
// numeric value in ERROR replies.
enum class ErrorCode : unsigned char {
  kLevelMismatch = 1,
  kScaleMismatch,
  kSlotCountMismatch,
  kLevelExhausted,
  kMissingRotationKey,
  kInsecureParameters,
  kInvalidPrime,
  kMagnitudeOverflow,
  kKeyMismatch,
  kInvalidCiphertextForm,
  kMissingSecretKey,
  kInvalidLayout,
  kZeroVector,
  kSlotOccupied,
  kCapacityExceeded,
  kNotPeriodic,
  kInvalidNin,
  kInvalidGeometry,
  kBackendUnavailable,
  kKeyRejected,
  kNotReady,
  kShardTimeout,
  kDecryptionFailure,
  kInvalidDim,
  kInvalidArgument,
  kFormatError,
  kIoError,
  kProtocolError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace bm
