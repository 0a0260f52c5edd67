#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sqlicl {

// Every recoverable failure in the library surfaces as an Error carrying one
// of these codes. Callers that need to branch (the CLI exit-code mapping, the
// correction scheduler) switch on code() instead of on exception type.
enum class ErrorCode {
  kSyntax,
  kUnsupportedConstruct,
  kParameterMismatch,
  kNoReplaceableKeyword,
  kNoValue,
  kNoCompatibleDonor,
  kNoPredicate,
  kTooFewJoins,
  kNoApplicableOperator,
  kCorpusTooSmall,
  kProviderUnavailable,
  kRateLimited,
  kReplayMiss,
  kNoSqlFound,
  kShapeMismatch,
  kEmptyGraph,
  kZeroNormEmbedding,
  kNonPositiveTemperature,
  kPoolTooSmall,
  kMissingEmbeddings,
  kCheckpointMismatch,
  kFormat,
  kGoldExecution,
  kExecution,
  kIo,
  kInvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the SQL parser; position is a 0-based byte offset into the input.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, const std::string& message)
      : Error(ErrorCode::kSyntax, message + " at offset " + std::to_string(position)),
        position_(position),
        detail_(message) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::size_t position_;
  std::string detail_;
};

class RateLimitedError : public Error {
 public:
  RateLimitedError(const std::string& message, long retry_after_ms)
      : Error(ErrorCode::kRateLimited, message), retry_after_ms_(retry_after_ms) {}

  // -1 when the provider sent no Retry-After hint.
  long retry_after_ms() const noexcept { return retry_after_ms_; }

 private:
  long retry_after_ms_;
};

}  // namespace sqlicl
