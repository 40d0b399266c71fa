#include "clens/error.hpp"

namespace clens {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::RowSumOutOfTolerance: return "RowSumOutOfTolerance";
    case ErrorCode::NegativeProbability: return "NegativeProbability";
    case ErrorCode::DimensionZero: return "DimensionZero";
    case ErrorCode::InconsistentClassCount: return "InconsistentClassCount";
    case ErrorCode::MissingIdLabels: return "MissingIdLabels";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ClassOutOfRange: return "ClassOutOfRange";
    case ErrorCode::InvalidMetrics: return "InvalidMetrics";
    case ErrorCode::NotADistribution: return "NotADistribution";
    case ErrorCode::EpochOutOfRange: return "EpochOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorCode::TailTooShort: return "TailTooShort";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::ZeroBins: return "ZeroBins";
    case ErrorCode::BadThresholds: return "BadThresholds";
    case ErrorCode::AllIdBinsEmpty: return "AllIdBinsEmpty";
    case ErrorCode::RatiosNotNormalized: return "RatiosNotNormalized";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::InsufficientBins: return "InsufficientBins";
    case ErrorCode::DegenerateFamily: return "DegenerateFamily";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::TooFewEpochs: return "TooFewEpochs";
    case ErrorCode::EmptySourceBin: return "EmptySourceBin";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
  }
  return "Unknown";
}

ErrorCategory error_category(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic:
    case ErrorCode::UnsupportedVersion:
    case ErrorCode::TruncatedFile:
    case ErrorCode::TrailingData:
    case ErrorCode::IoFailure:
    case ErrorCode::MissingFile:
    case ErrorCode::ParseError:
      return ErrorCategory::Io;
    case ErrorCode::SchemaError:
    case ErrorCode::ConfigInvalid:
      return ErrorCategory::Config;
    default:
      return ErrorCategory::Validation;
  }
}

}  // namespace clens
