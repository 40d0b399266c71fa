#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clens/proba_log.hpp"
#include "clens/scoring.hpp"

namespace clens {

inline constexpr std::uint32_t kDefaultBins = 40;

/// Uniform bins over [0, ln C]. Bins are half-open [lo, hi) except the last,
/// which is closed.
struct BinPartition {
  std::uint32_t n_bins = 0;
  std::vector<double> edges;  // n_bins + 1 values, edges[k] = k * ln(C) / n_bins
  std::vector<std::uint32_t> assignment;
  std::vector<std::size_t> counts;
  std::vector<double> ratios;

  double center(std::uint32_t bin) const { return 0.5 * (edges[bin] + edges[bin + 1]); }
  std::size_t n_samples() const { return assignment.size(); }
};

BinPartition bin_scores(std::span<const double> scores, std::uint32_t n_bins, std::uint32_t n_classes);

/// count_k / N per bin.
std::vector<double> participation_ratios(const BinPartition& partition);

struct BinStats {
  std::size_t count = 0;
  // Unset for empty bins.
  std::optional<double> mean_accuracy;
  std::optional<double> ensemble_accuracy;
  std::optional<double> mean_error_rate;
  std::optional<double> ensembling_gain;
};

struct BinProfile {
  std::vector<BinStats> bins;
};

/// Per-bin mean of each run's own-argmax accuracy and the accuracy of the
/// ensemble-mean argmax. Over a window, both are averaged across its epochs.
BinProfile per_bin_accuracy(const BinPartition& partition, const EnsembleView& logs,
                            const LabelVec& labels, EpochWindow window);

/// Per-bin accuracy of one prediction vector.
std::vector<std::optional<double>> per_bin_prediction_accuracy(const BinPartition& partition,
                                                               std::span<const std::uint32_t> predictions,
                                                               const LabelVec& labels);

enum class Subpop : std::uint8_t { Easy = 0, Medium = 1, Hard = 2 };
std::string_view subpop_name(Subpop group);

/// Label-dependent easy/medium/hard split by how many runs are correct.
struct SubpopSplit {
  double lo = 0.0;
  double hi = 0.0;
  std::uint32_t epoch = 0;
  std::uint32_t n_runs = 0;
  std::vector<std::uint32_t> correct_counts;
  std::vector<Subpop> groups;
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> ratios{};
};

/// easy iff count > hi, hard iff count < lo, medium otherwise. Defaults are
/// lo = M/3 and hi = 2M/3; the epoch defaults to the last common epoch.
SubpopSplit correct_count_split(const EnsembleView& logs, const LabelVec& labels,
                                std::optional<std::uint32_t> epoch = std::nullopt,
                                std::optional<double> lo = std::nullopt,
                                std::optional<double> hi = std::nullopt);

struct GroupAccuracy {
  Subpop group = Subpop::Easy;
  std::size_t count = 0;
  double ratio = 0.0;
  /// One entry per run, in the view's model_id order. Unset when empty.
  std::vector<std::optional<double>> per_run;
  std::optional<double> mean_run_accuracy;
  std::optional<double> ensemble_accuracy;
};

struct SubpopAccuracy {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::string> model_ids;
  std::array<GroupAccuracy, 3> groups;
};

SubpopAccuracy subpop_accuracy(const SubpopSplit& split, const EnsembleView& logs,
                               const LabelVec& labels, std::uint32_t epoch);

}  // namespace clens
