#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clens/proba_log.hpp"

namespace clens {

/// Inclusive 1-based epoch range.
struct EpochWindow {
  std::uint32_t first = 1;
  std::uint32_t last = 1;

  std::uint32_t size() const { return last - first + 1; }
  bool operator==(const EpochWindow&) const = default;
};

inline constexpr std::uint32_t kDefaultTailStart = 10;
inline constexpr double kZeroProbabilityCutoff = 1e-12;

/// Exact sum of non-negative f32 values. The result does not depend on the
/// order of additions, so ensemble means are invariant to run order and to
/// duplicating every run.
class ExactF32Sum {
 public:
  void add(float value) noexcept;
  double value() const noexcept;

 private:
  // Fixed point with unit 2^-149 (the smallest f32 subnormal).
  std::array<std::uint64_t, 5> limbs_{};
};

/// A set of runs on one dataset, ordered by model_id. Construction checks that
/// every run shares (N, C).
class EnsembleView {
 public:
  explicit EnsembleView(std::vector<const ProbLog*> runs);
  static EnsembleView of(std::span<const ProbLog> logs);

  std::size_t size() const { return runs_.size(); }
  std::uint32_t n_samples() const { return runs_.front()->n_samples; }
  std::uint32_t n_classes() const { return runs_.front()->n_classes; }
  /// Epochs available in every run.
  std::uint32_t n_epochs() const { return n_epochs_; }
  const ProbLog& run(std::size_t k) const { return *runs_[k]; }
  EpochWindow full_window() const { return {1, n_epochs_}; }

  void check_epoch(std::uint32_t epoch) const;
  void check_window(EpochWindow window) const;

 private:
  std::vector<const ProbLog*> runs_;
  std::uint32_t n_epochs_ = 0;
};

/// Shannon entropy in nats. `p` must be non-negative and sum to 1 within 1e-6;
/// it is rescaled by its sum, entries <= 1e-12 contribute nothing, and the
/// result is clamped into [0, ln C].
double entropy(std::span<const double> p);

/// Mean of the runs' rows for one (epoch, sample).
std::vector<double> ensemble_mean(const EnsembleView& logs, std::uint32_t epoch, std::size_t sample);
void ensemble_mean_into(const EnsembleView& logs, std::uint32_t epoch, std::size_t sample,
                        std::span<double> out);

std::vector<double> entropy_scores_at(const EnsembleView& logs, std::uint32_t epoch);

/// Per-sample mean of the entropy scores over the window.
std::vector<double> confusion_scores(const EnsembleView& logs, EpochWindow window);

/// Per-sample population standard deviation of the entropy scores over
/// epochs tail_start..T. Needs at least two epochs in the tail.
std::vector<double> entropy_std(const EnsembleView& logs, std::uint32_t tail_start);

/// Argmax of the ensemble mean, ties to the lowest class.
std::vector<std::uint32_t> ensemble_predict(const EnsembleView& logs, std::uint32_t epoch);

/// Argmax of a single run's rows, ties to the lowest class.
std::vector<std::uint32_t> argmax_predict(const ProbLog& log, std::uint32_t epoch);

/// All of the above for one dataset in a single pass.
struct ScoreTable {
  std::string dataset_name;
  EpochWindow window;
  std::uint32_t n_epochs = 0;
  /// [sample * n_epochs + (t - 1)] for t in 1..n_epochs.
  std::vector<double> entropy_series;
  std::vector<double> confusion;
  /// Empty when the tail is shorter than two epochs.
  std::vector<double> entropy_std;
  std::uint32_t tail_start = kDefaultTailStart;

  double entropy_at(std::size_t sample, std::uint32_t epoch) const {
    return entropy_series[sample * n_epochs + (epoch - 1)];
  }
  double mean_confusion() const;
};

ScoreTable score_table(const EnsembleView& logs, std::string dataset_name,
                       std::optional<EpochWindow> window = std::nullopt,
                       std::uint32_t tail_start = kDefaultTailStart);

}  // namespace clens
