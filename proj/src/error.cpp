#include "sqlicl/error.hpp"

namespace sqlicl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSyntax: return "SyntaxError";
    case ErrorCode::kUnsupportedConstruct: return "UnsupportedConstruct";
    case ErrorCode::kParameterMismatch: return "ParameterMismatch";
    case ErrorCode::kNoReplaceableKeyword: return "NoReplaceableKeyword";
    case ErrorCode::kNoValue: return "NoValue";
    case ErrorCode::kNoCompatibleDonor: return "NoCompatibleDonor";
    case ErrorCode::kNoPredicate: return "NoPredicate";
    case ErrorCode::kTooFewJoins: return "TooFewJoins";
    case ErrorCode::kNoApplicableOperator: return "NoApplicableOperator";
    case ErrorCode::kCorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::kRateLimited: return "RateLimited";
    case ErrorCode::kReplayMiss: return "ReplayMiss";
    case ErrorCode::kNoSqlFound: return "NoSqlFound";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyGraph: return "EmptyGraph";
    case ErrorCode::kZeroNormEmbedding: return "ZeroNormEmbedding";
    case ErrorCode::kNonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::kPoolTooSmall: return "PoolTooSmall";
    case ErrorCode::kMissingEmbeddings: return "MissingEmbeddings";
    case ErrorCode::kCheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::kFormat: return "FormatError";
    case ErrorCode::kGoldExecution: return "GoldExecutionError";
    case ErrorCode::kExecution: return "ExecutionError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace sqlicl
