#include "clens/partition.hpp"

#include <cmath>

#include "clens/error.hpp"

namespace clens {

std::string_view subpop_name(Subpop group) {
  switch (group) {
    case Subpop::Easy: return "easy";
    case Subpop::Medium: return "medium";
    case Subpop::Hard: return "hard";
  }
  return "?";
}

BinPartition bin_scores(std::span<const double> scores, std::uint32_t n_bins, std::uint32_t n_classes) {
  if (n_bins == 0) throw Error(ErrorCode::ZeroBins, "need at least one bin");
  if (n_classes < 2) throw Error(ErrorCode::DimensionZero, "need at least 2 classes");
  const double max_score = std::log(static_cast<double>(n_classes));

  BinPartition p;
  p.n_bins = n_bins;
  p.edges.resize(n_bins + 1);
  for (std::uint32_t k = 0; k <= n_bins; ++k) p.edges[k] = static_cast<double>(k) * max_score / n_bins;
  p.edges[n_bins] = max_score;

  p.assignment.resize(scores.size());
  p.counts.assign(n_bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!(s >= 0.0 && s <= max_score)) {
      throw Error(ErrorCode::ScoreOutOfRange, "score " + std::to_string(s) + " at index " +
                                                  std::to_string(i) + " outside [0, ln C]");
    }
    auto k = static_cast<std::uint32_t>(std::min<double>(std::floor(s * n_bins / max_score), n_bins - 1));
    // Settle against the stored edges so assignment and edges always agree.
    while (k + 1 < n_bins && s >= p.edges[k + 1]) ++k;
    while (k > 0 && s < p.edges[k]) --k;
    p.assignment[i] = k;
    ++p.counts[k];
  }
  p.ratios = participation_ratios(p);
  return p;
}

std::vector<double> participation_ratios(const BinPartition& partition) {
  std::vector<double> ratios(partition.n_bins, 0.0);
  const double n = static_cast<double>(partition.n_samples());
  if (n == 0) return ratios;
  for (std::uint32_t k = 0; k < partition.n_bins; ++k) {
    ratios[k] = static_cast<double>(partition.counts[k]) / n;
  }
  return ratios;
}

namespace {

void check_lengths(std::size_t partition_n, const EnsembleView& logs, const LabelVec& labels) {
  if (partition_n != logs.n_samples() || labels.size() != logs.n_samples()) {
    throw Error(ErrorCode::LengthMismatch, "partition (" + std::to_string(partition_n) + "), logs (" +
                                               std::to_string(logs.n_samples()) + ") and labels (" +
                                               std::to_string(labels.size()) + ") disagree on N");
  }
}

}  // namespace

std::vector<std::optional<double>> per_bin_prediction_accuracy(const BinPartition& partition,
                                                               std::span<const std::uint32_t> predictions,
                                                               const LabelVec& labels) {
  if (predictions.size() != partition.n_samples() || labels.size() != partition.n_samples()) {
    throw Error(ErrorCode::LengthMismatch, "predictions/labels do not match the partition");
  }
  std::vector<std::size_t> correct(partition.n_bins, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct[partition.assignment[i]];
  }
  std::vector<std::optional<double>> acc(partition.n_bins);
  for (std::uint32_t k = 0; k < partition.n_bins; ++k) {
    if (partition.counts[k] > 0) {
      acc[k] = static_cast<double>(correct[k]) / static_cast<double>(partition.counts[k]);
    }
  }
  return acc;
}

BinProfile per_bin_accuracy(const BinPartition& partition, const EnsembleView& logs,
                            const LabelVec& labels, EpochWindow window) {
  check_lengths(partition.n_samples(), logs, labels);
  logs.check_window(window);
  const std::size_t n = logs.n_samples();
  const double runs = static_cast<double>(logs.size());
  const double epochs = static_cast<double>(window.size());

  // Correct-count totals per bin, summed over runs and epochs (exact integers).
  std::vector<std::size_t> run_correct(partition.n_bins, 0);
  std::vector<std::size_t> ens_correct(partition.n_bins, 0);
  for (std::uint32_t t = window.first; t <= window.last; ++t) {
    for (std::size_t k = 0; k < logs.size(); ++k) {
      const auto pred = argmax_predict(logs.run(k), t);
      for (std::size_t i = 0; i < n; ++i) {
        if (pred[i] == labels[i]) ++run_correct[partition.assignment[i]];
      }
    }
    const auto ens = ensemble_predict(logs, t);
    for (std::size_t i = 0; i < n; ++i) {
      if (ens[i] == labels[i]) ++ens_correct[partition.assignment[i]];
    }
  }

  BinProfile profile;
  profile.bins.resize(partition.n_bins);
  for (std::uint32_t k = 0; k < partition.n_bins; ++k) {
    BinStats& b = profile.bins[k];
    b.count = partition.counts[k];
    if (b.count == 0) continue;
    const double denom = static_cast<double>(b.count) * epochs;
    b.mean_accuracy = static_cast<double>(run_correct[k]) / (denom * runs);
    b.ensemble_accuracy = static_cast<double>(ens_correct[k]) / denom;
    b.mean_error_rate = 1.0 - *b.mean_accuracy;
    b.ensembling_gain = *b.ensemble_accuracy - *b.mean_accuracy;
  }
  return profile;
}

SubpopSplit correct_count_split(const EnsembleView& logs, const LabelVec& labels,
                                std::optional<std::uint32_t> epoch, std::optional<double> lo,
                                std::optional<double> hi) {
  if (labels.size() != logs.n_samples()) {
    throw Error(ErrorCode::LengthMismatch, "labels do not match the logs");
  }
  const double m = static_cast<double>(logs.size());
  SubpopSplit split;
  split.n_runs = static_cast<std::uint32_t>(logs.size());
  split.lo = lo.value_or(m / 3.0);
  split.hi = hi.value_or(2.0 * m / 3.0);
  if (!(split.lo >= 0.0 && split.lo < split.hi && split.hi <= m)) {
    throw Error(ErrorCode::BadThresholds, "need 0 <= lo < hi <= M (lo=" + std::to_string(split.lo) +
                                              ", hi=" + std::to_string(split.hi) + ", M=" +
                                              std::to_string(logs.size()) + ")");
  }
  split.epoch = epoch.value_or(logs.n_epochs());
  logs.check_epoch(split.epoch);

  const std::size_t n = logs.n_samples();
  split.correct_counts.assign(n, 0);
  for (std::size_t k = 0; k < logs.size(); ++k) {
    const auto pred = argmax_predict(logs.run(k), split.epoch);
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] == labels[i]) ++split.correct_counts[i];
    }
  }
  split.groups.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = split.correct_counts[i];
    const Subpop g = c > split.hi ? Subpop::Easy : (c < split.lo ? Subpop::Hard : Subpop::Medium);
    split.groups[i] = g;
    ++split.counts[static_cast<std::size_t>(g)];
  }
  for (std::size_t g = 0; g < 3; ++g) {
    split.ratios[g] = static_cast<double>(split.counts[g]) / static_cast<double>(n);
  }
  return split;
}

SubpopAccuracy subpop_accuracy(const SubpopSplit& split, const EnsembleView& logs,
                               const LabelVec& labels, std::uint32_t epoch) {
  check_lengths(split.groups.size(), logs, labels);
  logs.check_epoch(epoch);
  const std::size_t n = logs.n_samples();

  SubpopAccuracy out;
  out.lo = split.lo;
  out.hi = split.hi;
  for (std::size_t k = 0; k < logs.size(); ++k) out.model_ids.push_back(logs.run(k).model_id);

  std::array<std::vector<std::size_t>, 3> run_correct;
  for (auto& v : run_correct) v.assign(logs.size(), 0);
  std::array<std::size_t, 3> ens_correct{};
  for (std::size_t k = 0; k < logs.size(); ++k) {
    const auto pred = argmax_predict(logs.run(k), epoch);
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] == labels[i]) ++run_correct[static_cast<std::size_t>(split.groups[i])][k];
    }
  }
  const auto ens = ensemble_predict(logs, epoch);
  for (std::size_t i = 0; i < n; ++i) {
    if (ens[i] == labels[i]) ++ens_correct[static_cast<std::size_t>(split.groups[i])];
  }

  for (std::size_t g = 0; g < 3; ++g) {
    GroupAccuracy& ga = out.groups[g];
    ga.group = static_cast<Subpop>(g);
    ga.count = split.counts[g];
    ga.ratio = split.ratios[g];
    ga.per_run.assign(logs.size(), std::nullopt);
    if (ga.count == 0) continue;
    const double count = static_cast<double>(ga.count);
    std::size_t total = 0;
    for (std::size_t k = 0; k < logs.size(); ++k) {
      ga.per_run[k] = static_cast<double>(run_correct[g][k]) / count;
      total += run_correct[g][k];
    }
    ga.mean_run_accuracy = static_cast<double>(total) / (count * static_cast<double>(logs.size()));
    ga.ensemble_accuracy = static_cast<double>(ens_correct[g]) / count;
  }
  return out;
}

}  // namespace clens
