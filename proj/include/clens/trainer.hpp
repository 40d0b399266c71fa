#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clens/proba_log.hpp"
#include "clens/synth.hpp"

namespace clens {

struct ToyArch {
  std::vector<std::uint32_t> hidden;  // empty: multinomial logistic regression
  std::uint32_t input_dim = 0;
  std::uint32_t n_classes = 0;

  std::uint64_t param_count() const;
  /// "mlp16x16", or "linear" without hidden layers.
  std::string name() const;
  void validate() const;
};

struct DenseLayer {
  std::uint32_t in = 0;
  std::uint32_t out = 0;
  std::vector<double> w;  // in x out, row-major
  std::vector<double> b;
};

struct ToyModel {
  ToyArch arch;
  std::vector<DenseLayer> layers;

  std::size_t param_size() const;
  /// Parameters flattened layer by layer, weights then biases.
  std::vector<double> flat() const;
  void set_flat(std::span<const double> params);
};

struct TrainConfig {
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 128;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

ToyModel init_model(const ToyArch& arch, std::uint64_t seed);

/// Softmax probabilities for one input row.
std::vector<double> forward(const ToyModel& model, std::span<const float> x);

/// Mean cross-entropy over `rows` of `data` and its gradient, in flat() order.
double loss_and_gradient(const ToyModel& model, const SynthDataset& data, std::span<const std::size_t> rows,
                         std::vector<double>& gradient);

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Momentum buffer, flat() layout.
struct OptimizerState {
  std::vector<double> velocity;
};

/// One pass over a shuffle derived from (config.seed, epoch_index); returns
/// the mean mini-batch loss and accuracy seen during the pass.
EpochStats train_epoch(ToyModel& model, OptimizerState& state, const SynthDataset& train, const TrainConfig& config,
                       std::uint32_t epoch_index);

/// Loss and accuracy of the current model over a whole dataset.
EpochStats evaluate(const ToyModel& model, const SynthDataset& data);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::vector<double> relative_errors;
};

/// Central differences with step h on `probes` random parameters.
GradientCheck gradient_check(const ToyModel& model, const SynthDataset& data, std::uint32_t probes, double h,
                             std::uint64_t seed);

struct RunOutput {
  std::string model_id;
  std::string family;
  std::uint64_t seed = 0;  // replica index
  std::uint64_t param_count = 0;
  std::map<std::string, ProbLog> logs;  // per evaluated dataset
  MetricsSeries metrics;
};

/// Trains replica `replica` of `arch` and snapshots probabilities on every
/// dataset of the bundle after every epoch. Initialization and shuffling use
/// streams derived from config.seed and the model id.
RunOutput train_run(const ToyArch& arch, std::uint64_t replica, const TrainConfig& config,
                    const DatasetBundle& data);

/// All (arch, replica) pairs, trained in parallel; output order is arch-major.
std::vector<RunOutput> train_ensemble(const DatasetBundle& data, const std::vector<ToyArch>& archs,
                                      std::uint32_t replicas, const TrainConfig& config);

/// "<arch name>-s<replica>"
std::string model_id_for(const ToyArch& arch, std::uint64_t replica);

}  // namespace clens
