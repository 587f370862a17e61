#pragma once

#include <stdexcept>
#include <string>

namespace sss_prnu {

enum class ErrorCode : int {
  kZeroInverse = 1,
  kInvalidParams,
  kOutOfRange,
  kCapacityExceeded,
  kInsufficientShares,
  kDuplicatePoint,
  kPointMismatch,
  kDegreeMismatch,
  kLengthMismatch,
  kDegreeOverflow,
  kDegenerateInput,
  kEmptySet,
  kDimensionMismatch,
  kNegativeSquareSum,
  kEnrollTimeout,
  kQuorumNotReached,
  kUnknownFingerprint,
  kNotApplicable,
  kMalformed,
  kIdConflict,
  kTransport,
  kIo,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroInverse: return "ZeroInverse";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kCapacityExceeded: return "CapacityExceeded";
    case ErrorCode::kInsufficientShares: return "InsufficientShares";
    case ErrorCode::kDuplicatePoint: return "DuplicatePoint";
    case ErrorCode::kPointMismatch: return "PointMismatch";
    case ErrorCode::kDegreeMismatch: return "DegreeMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDegreeOverflow: return "DegreeOverflow";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNegativeSquareSum: return "NegativeSquareSum";
    case ErrorCode::kEnrollTimeout: return "EnrollTimeout";
    case ErrorCode::kQuorumNotReached: return "QuorumNotReached";
    case ErrorCode::kUnknownFingerprint: return "UnknownFingerprint";
    case ErrorCode::kNotApplicable: return "NotApplicable";
    case ErrorCode::kMalformed: return "Malformed";
    case ErrorCode::kIdConflict: return "IdConflict";
    case ErrorCode::kTransport: return "Transport";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

// Base of every library exception. Catch this to handle any failure and
// inspect code() to tell them apart.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <ErrorCode C>
class ErrorOf : public Error {
 public:
  explicit ErrorOf(const std::string& what) : Error(C, what) {}
};

using ZeroInverse = ErrorOf<ErrorCode::kZeroInverse>;
using InvalidParams = ErrorOf<ErrorCode::kInvalidParams>;
using OutOfRange = ErrorOf<ErrorCode::kOutOfRange>;
using CapacityExceeded = ErrorOf<ErrorCode::kCapacityExceeded>;
using InsufficientShares = ErrorOf<ErrorCode::kInsufficientShares>;
using DuplicatePoint = ErrorOf<ErrorCode::kDuplicatePoint>;
using PointMismatch = ErrorOf<ErrorCode::kPointMismatch>;
using DegreeMismatch = ErrorOf<ErrorCode::kDegreeMismatch>;
using LengthMismatch = ErrorOf<ErrorCode::kLengthMismatch>;
using DegreeOverflow = ErrorOf<ErrorCode::kDegreeOverflow>;
using DegenerateInput = ErrorOf<ErrorCode::kDegenerateInput>;
using EmptySet = ErrorOf<ErrorCode::kEmptySet>;
using DimensionMismatch = ErrorOf<ErrorCode::kDimensionMismatch>;
using NegativeSquareSum = ErrorOf<ErrorCode::kNegativeSquareSum>;
using EnrollTimeout = ErrorOf<ErrorCode::kEnrollTimeout>;
using QuorumNotReached = ErrorOf<ErrorCode::kQuorumNotReached>;
using UnknownFingerprint = ErrorOf<ErrorCode::kUnknownFingerprint>;
using NotApplicable = ErrorOf<ErrorCode::kNotApplicable>;
using Malformed = ErrorOf<ErrorCode::kMalformed>;
using IdConflict = ErrorOf<ErrorCode::kIdConflict>;
using TransportError = ErrorOf<ErrorCode::kTransport>;
using IoError = ErrorOf<ErrorCode::kIo>;

}  // namespace sss_prnu
