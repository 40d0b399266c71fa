#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clens {

enum class ErrorCode {
  // file format / I/O
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  TrailingData,
  IoFailure,
  MissingFile,
  ParseError,
  // configuration
  SchemaError,
  ConfigInvalid,
  // validation
  RowSumOutOfTolerance,
  NegativeProbability,
  DimensionZero,
  InconsistentClassCount,
  MissingIdLabels,
  LengthMismatch,
  ClassOutOfRange,
  InvalidMetrics,
  NotADistribution,
  EpochOutOfRange,
  ShapeMismatch,
  WindowOutOfRange,
  TailTooShort,
  ScoreOutOfRange,
  ZeroBins,
  BadThresholds,
  AllIdBinsEmpty,
  RatiosNotNormalized,
  UnknownModel,
  UnknownDataset,
  OutOfDomain,
  InsufficientBins,
  DegenerateFamily,
  RankDeficient,
  TooFewEpochs,
  EmptySourceBin,
  NonFiniteLoss,
};

/// Coarse grouping used by the CLI to pick an exit code.
enum class ErrorCategory { Validation, Io, Config };

std::string_view error_code_name(ErrorCode code) noexcept;
ErrorCategory error_category(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return error_category(code_); }

 private:
  ErrorCode code_;
};

}  // namespace clens
