#include "clens/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "clens/error.hpp"

namespace clens {

MixturePrediction predict_ood_accuracy(std::span<const double> id_bin_accs,
                                       std::span<const std::size_t> id_bin_counts,
                                       std::span<const double> ood_ratios) {
  const std::size_t n = id_bin_accs.size();
  if (id_bin_counts.size() != n || ood_ratios.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "accuracy, count and ratio vectors differ in length");
  }
  double ratio_sum = 0.0;
  for (double r : ood_ratios) {
    if (!(r >= 0.0)) throw Error(ErrorCode::RatiosNotNormalized, "negative OOD ratio");
    ratio_sum += r;
  }
  if (std::fabs(ratio_sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::RatiosNotNormalized, "OOD ratios sum to " + std::to_string(ratio_sum));
  }
  if (std::all_of(id_bin_counts.begin(), id_bin_counts.end(), [](std::size_t c) { return c == 0; })) {
    throw Error(ErrorCode::AllIdBinsEmpty, "every ID bin is empty");
  }

  MixturePrediction out;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (ood_ratios[k] == 0.0) continue;
    std::size_t source = k;
    if (id_bin_counts[k] == 0) {
      ++out.fallback_bins_used;
      for (std::size_t d = 1;; ++d) {
        if (d <= k && id_bin_counts[k - d] > 0) {
          source = k - d;
          break;
        }
        if (k + d < n && id_bin_counts[k + d] > 0) {
          source = k + d;
          break;
        }
      }
    }
    total += ood_ratios[k] * id_bin_accs[source];
  }
  out.accuracy = std::clamp(total, 0.0, 1.0);
  return out;
}

OodPrediction predict_from_partitions(const BinPartition& id_partition, const BinPartition& ood_partition,
                                      std::span<const std::uint32_t> id_predictions, const LabelVec& id_labels,
                                      std::span<const std::uint32_t> ood_predictions,
                                      const LabelVec* ood_labels) {
  if (id_partition.n_bins != ood_partition.n_bins) {
    throw Error(ErrorCode::LengthMismatch, "ID and OOD partitions use different bin counts");
  }
  const auto accs = per_bin_prediction_accuracy(id_partition, id_predictions, id_labels);
  std::vector<double> dense(accs.size(), 0.0);
  for (std::size_t k = 0; k < accs.size(); ++k) dense[k] = accs[k].value_or(0.0);
  const auto mix = predict_ood_accuracy(dense, id_partition.counts, ood_partition.ratios);

  OodPrediction out;
  out.n_bins = id_partition.n_bins;
  out.predicted_accuracy = mix.accuracy;
  out.fallback_bins_used = mix.fallback_bins_used;
  if (ood_labels != nullptr && !ood_predictions.empty()) {
    if (ood_predictions.size() != ood_labels->size() || ood_predictions.size() != ood_partition.n_samples()) {
      throw Error(ErrorCode::LengthMismatch, "OOD predictions/labels do not match the OOD partition");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ood_predictions.size(); ++i) {
      if (ood_predictions[i] == (*ood_labels)[i]) ++correct;
    }
    out.actual_accuracy = static_cast<double>(correct) / static_cast<double>(ood_predictions.size());
    out.residual = out.predicted_accuracy - *out.actual_accuracy;
  }
  return out;
}

namespace {

// Scores, partitions and predictions for one manifest, computed once each.
class Session {
 public:
  Session(const Manifest& manifest, const PredictionConfig& config)
      : manifest_(manifest), config_(config) {
    scorers_ = config.scoring_ensemble.empty() ? manifest.scoring_ids() : config.scoring_ensemble;
    std::sort(scorers_.begin(), scorers_.end());
    for (const auto& id : scorers_) manifest.run(id);
  }

  EnsembleView view(const std::string& dataset) const {
    return EnsembleView(manifest_.logs_for(scorers_, dataset));
  }

  EpochWindow window() {
    if (!window_) {
      const auto v = view(manifest_.id_dataset().name);
      window_ = config_.window.value_or(v.full_window());
    }
    return *window_;
  }

  const std::vector<double>& scores(const std::string& dataset) {
    auto it = scores_.find(dataset);
    if (it != scores_.end()) return it->second;
    manifest_.dataset(dataset);
    const auto v = view(dataset);
    std::vector<double> s;
    if (config_.partition_epoch) {
      s = entropy_scores_at(v, *config_.partition_epoch);
    } else {
      s = confusion_scores(v, window());
    }
    return scores_.emplace(dataset, std::move(s)).first->second;
  }

  const BinPartition& partition(const std::string& dataset) {
    auto it = partitions_.find(dataset);
    if (it != partitions_.end()) return it->second;
    auto p = bin_scores(scores(dataset), config_.n_bins, manifest_.n_classes);
    return partitions_.emplace(dataset, std::move(p)).first->second;
  }

  const std::vector<std::uint32_t>& predictions(const std::string& model_id, const std::string& dataset) {
    const auto key = std::make_pair(model_id, dataset);
    auto it = predictions_.find(key);
    if (it != predictions_.end()) return it->second;
    std::vector<std::uint32_t> pred;
    if (model_id == kEnsembleModelId) {
      const auto v = view(dataset);
      pred = ensemble_predict(v, config_.eval_epoch.value_or(v.n_epochs()));
    } else {
      const ProbLog& log = manifest_.log(model_id, dataset);
      pred = argmax_predict(log, config_.eval_epoch.value_or(log.n_epochs));
    }
    return predictions_.emplace(key, std::move(pred)).first->second;
  }

  OodPrediction predict(const std::string& model_id, const std::string& ood_name) {
    if (model_id != kEnsembleModelId) manifest_.run(model_id);
    manifest_.dataset(ood_name);
    const std::string id_name = manifest_.id_dataset().name;
    const LabelVec* ood_labels = manifest_.labels(ood_name);
    std::span<const std::uint32_t> ood_pred;
    if (ood_labels != nullptr) ood_pred = predictions(model_id, ood_name);
    OodPrediction row = predict_from_partitions(partition(id_name), partition(ood_name),
                                                predictions(model_id, id_name), *manifest_.labels(id_name),
                                                ood_pred, ood_labels);
    row.model_id = model_id;
    row.ood_dataset = ood_name;
    if (config_.partition_epoch) {
      row.partition_epoch = config_.partition_epoch;
      row.window = {*config_.partition_epoch, *config_.partition_epoch};
    } else {
      row.window = window();
    }
    return row;
  }

 private:
  const Manifest& manifest_;
  PredictionConfig config_;
  std::vector<std::string> scorers_;
  std::optional<EpochWindow> window_;
  std::map<std::string, std::vector<double>> scores_;
  std::map<std::string, BinPartition> partitions_;
  std::map<std::pair<std::string, std::string>, std::vector<std::uint32_t>> predictions_;
};

}  // namespace

OodPrediction predict_for_model(const Manifest& manifest, const std::string& model_id,
                                std::optional<EpochWindow> window, std::uint32_t n_bins,
                                const std::string& ood_name) {
  PredictionConfig config;
  config.window = window;
  config.n_bins = n_bins;
  return Session(manifest, config).predict(model_id, ood_name);
}

OodPrediction predict_epoch_variant(const Manifest& manifest, const std::string& model_id, std::uint32_t epoch,
                                    std::uint32_t n_bins, const std::string& ood_name) {
  PredictionConfig config;
  config.n_bins = n_bins;
  config.partition_epoch = epoch;
  return Session(manifest, config).predict(model_id, ood_name);
}

PredictionReport prediction_report(const Manifest& manifest, const PredictionConfig& config) {
  Session session(manifest, config);
  PredictionReport report;
  report.config = config;
  report.id_dataset = manifest.id_dataset().name;

  std::vector<std::string> targets{report.id_dataset};
  for (const auto* d : manifest.datasets_with_role(DatasetRole::Ood)) targets.push_back(d->name);

  for (const auto& name : targets) {
    const auto& s = session.scores(name);
    double sum = 0.0;
    for (double v : s) sum += v;
    report.mean_confusion[name] = sum / static_cast<double>(s.size());
  }

  auto models = manifest.model_ids();
  models.emplace_back(kEnsembleModelId);
  for (const auto& model : models) {
    for (const auto& target : targets) report.rows.push_back(session.predict(model, target));
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const OodPrediction& a, const OodPrediction& b) {
    return std::tie(a.model_id, a.ood_dataset) < std::tie(b.model_id, b.ood_dataset);
  });
  return report;
}

}  // namespace clens
