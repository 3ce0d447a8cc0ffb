// SPDX-License-Identifier: Apache-2.0
#include "bm/error.hpp"

namespace bm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kLevelMismatch: return "LevelMismatch";
    case ErrorCode::kScaleMismatch: return "ScaleMismatch";
    case ErrorCode::kSlotCountMismatch: return "SlotCountMismatch";
    case ErrorCode::kLevelExhausted: return "LevelExhausted";
    case ErrorCode::kMissingRotationKey: return "MissingRotationKey";
    case ErrorCode::kInsecureParameters: return "InsecureParameters";
    case ErrorCode::kInvalidPrime: return "InvalidPrime";
    case ErrorCode::kMagnitudeOverflow: return "MagnitudeOverflow";
    case ErrorCode::kKeyMismatch: return "KeyMismatch";
    case ErrorCode::kInvalidCiphertextForm: return "InvalidCiphertextForm";
    case ErrorCode::kMissingSecretKey: return "MissingSecretKey";
    case ErrorCode::kInvalidLayout: return "InvalidLayout";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kSlotOccupied: return "SlotOccupied";
    case ErrorCode::kCapacityExceeded: return "CapacityExceeded";
    case ErrorCode::kNotPeriodic: return "NotPeriodic";
    case ErrorCode::kInvalidNin: return "InvalidNin";
    case ErrorCode::kInvalidGeometry: return "InvalidGeometry";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kKeyRejected: return "KeyRejected";
    case ErrorCode::kNotReady: return "NotReady";
    case ErrorCode::kShardTimeout: return "ShardTimeout";
    case ErrorCode::kDecryptionFailure: return "DecryptionFailure";
    case ErrorCode::kInvalidDim: return "InvalidDim";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kProtocolError: return "ProtocolError";
  }
  return "Unknown";
}

}  // namespace bm
