#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clens/proba_log.hpp"
#include "clens/scoring.hpp"

namespace clens {

/// Mean over samples of the ensemble entropy, one value per epoch 1..T.
std::vector<double> mean_entropy_trajectory(const EnsembleView& logs);

/// Centered moving average with `window` points (odd), truncated at the edges.
std::vector<double> moving_average(const std::vector<double>& series, std::uint32_t window);

struct PhaseReport {
  /// Epoch numbers as they appear in the metrics; unset when not detected.
  std::optional<std::uint32_t> t1;
  std::optional<std::uint32_t> t2;
  std::uint32_t window = 3;
  double delta = 0.005;
  std::vector<std::uint32_t> epochs;
  std::vector<double> train_loss;  // smoothed
  std::vector<double> test_loss;   // smoothed mean over test datasets
  std::vector<double> train_accuracy;
  std::vector<double> id_accuracy;
};

/// t1: last epoch before the smoothed mean test loss rises while the smoothed
/// train loss falls. t2: first epoch after which neither train nor ID accuracy
/// (smoothed) gains delta or more.
PhaseReport detect_phases(const MetricsSeries& metrics, const std::string& train_dataset,
                          const std::string& id_dataset, const std::vector<std::string>& test_datasets,
                          std::uint32_t window = 3, double delta = 0.005);

struct PhaseCurveSpec {
  std::uint32_t n_epochs = 30;
  std::uint32_t loss_minimum = 5;  // test loss is lowest here
  std::uint32_t saturation = 10;   // accuracies stop improving here
  double noise = 0.0005;
  std::uint64_t seed = 0;
};

/// Noisy train/id metrics with known change points, for exercising the detector.
MetricsSeries synthetic_phase_metrics(const PhaseCurveSpec& spec);

}  // namespace clens
