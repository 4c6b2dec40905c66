#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gcp {

enum class ErrorCode {
  // linear algebra
  NotPositiveDefinite,
  SingularTriangular,
  NotSkew,
  EmptyIndexSet,
  IndexOutOfRange,
  ShapeMismatch,
  // statistics
  DomainError,
  EmptyScores,
  TooFewSamples,
  // models and scores
  NonFiniteLoss,
  DegenerateCovariance,
  SingularBlock,
  RankDeficientTransform,
  EmptyCalibration,
  InfiniteSet,
  // data and configuration
  MalformedRow,
  MissingFeature,
  FractionSumError,
  Io,
  Config,
};

/// Coarse grouping used by the CLI to pick an exit code.
enum class ErrorCategory { Config, Data, Numeric };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace gcp
