#include "gcp/error.hpp"

namespace gcp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::SingularTriangular: return "SingularTriangular";
    case ErrorCode::NotSkew: return "NotSkew";
    case ErrorCode::EmptyIndexSet: return "EmptyIndexSet";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::EmptyScores: return "EmptyScores";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::RankDeficientTransform: return "RankDeficientTransform";
    case ErrorCode::EmptyCalibration: return "EmptyCalibration";
    case ErrorCode::InfiniteSet: return "InfiniteSet";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::MissingFeature: return "MissingFeature";
    case ErrorCode::FractionSumError: return "FractionSumError";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::FractionSumError:
      return ErrorCategory::Config;
    case ErrorCode::MalformedRow:
    case ErrorCode::MissingFeature:
    case ErrorCode::Io:
    case ErrorCode::TooFewSamples:
    case ErrorCode::EmptyCalibration:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Numeric;
  }
}

}  // namespace gcp
