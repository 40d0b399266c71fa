#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clens/manifest.hpp"
#include "clens/partition.hpp"
#include "clens/scoring.hpp"

namespace clens {

inline constexpr std::string_view kEnsembleModelId = "ensemble";

struct MixturePrediction {
  double accuracy = 0.0;
  /// OOD-weighted bins whose ID accuracy was borrowed from a neighbour.
  std::uint32_t fallback_bins_used = 0;
};

/// Sum over bins of ood_ratio_k * acc_k. Bins with zero ID count borrow the
/// accuracy of the nearest non-empty bin (ties to the lower index);
/// `id_bin_accs` entries of empty bins are ignored.
MixturePrediction predict_ood_accuracy(std::span<const double> id_bin_accs,
                                       std::span<const std::size_t> id_bin_counts,
                                       std::span<const double> ood_ratios);

struct OodPrediction {
  std::string ood_dataset;
  std::string model_id;
  double predicted_accuracy = 0.0;
  std::optional<double> actual_accuracy;
  std::optional<double> residual;  // predicted - actual
  std::uint32_t n_bins = 0;
  EpochWindow window;
  /// Set for the e_t variant: partition by entropy at this single epoch.
  std::optional<std::uint32_t> partition_epoch;
  std::uint32_t fallback_bins_used = 0;
};

/// Core of every prediction: ID/OOD partitions from the scoring ensemble plus
/// the predicted model's class predictions on both sets.
OodPrediction predict_from_partitions(const BinPartition& id_partition, const BinPartition& ood_partition,
                                      std::span<const std::uint32_t> id_predictions, const LabelVec& id_labels,
                                      std::span<const std::uint32_t> ood_predictions = {},
                                      const LabelVec* ood_labels = nullptr);

struct PredictionConfig {
  std::uint32_t n_bins = kDefaultBins;
  /// Confusion-score window; defaults to every epoch of the scoring ensemble.
  std::optional<EpochWindow> window;
  /// Epoch at which the predicted model is evaluated; defaults to its last.
  std::optional<std::uint32_t> eval_epoch;
  /// Partition by entropy at this epoch instead of the windowed average.
  std::optional<std::uint32_t> partition_epoch;
  /// Overrides the manifest's scoring ensemble when non-empty.
  std::vector<std::string> scoring_ensemble;
};

OodPrediction predict_for_model(const Manifest& manifest, const std::string& model_id,
                                std::optional<EpochWindow> window, std::uint32_t n_bins,
                                const std::string& ood_name);

OodPrediction predict_epoch_variant(const Manifest& manifest, const std::string& model_id, std::uint32_t epoch,
                                    std::uint32_t n_bins, const std::string& ood_name);

struct PredictionReport {
  PredictionConfig config;
  std::string id_dataset;
  /// Sorted by (model_id, ood_dataset); includes the ID self-row per model and
  /// an "ensemble" row for the scoring ensemble's consensus.
  std::vector<OodPrediction> rows;
  std::map<std::string, double> mean_confusion;
};

PredictionReport prediction_report(const Manifest& manifest, const PredictionConfig& config);

}  // namespace clens
