#include "clens/phases.hpp"

#include <algorithm>
#include <cmath>

#include "clens/error.hpp"
#include "clens/rng.hpp"

namespace clens {

std::vector<double> mean_entropy_trajectory(const EnsembleView& logs) {
  std::vector<double> out;
  out.reserve(logs.n_epochs());
  for (std::uint32_t t = 1; t <= logs.n_epochs(); ++t) {
    const auto s = entropy_scores_at(logs, t);
    double sum = 0.0;
    for (double v : s) sum += v;
    out.push_back(sum / static_cast<double>(s.size()));
  }
  return out;
}

std::vector<double> moving_average(const std::vector<double>& series, std::uint32_t window) {
  if (window == 0 || window % 2 == 0) {
    throw Error(ErrorCode::ConfigInvalid, "smoothing window must be a positive odd number");
  }
  const std::size_t half = window / 2;
  const std::size_t n = series.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(n - 1, t + half);
    double sum = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) sum += series[k];
    out[t] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

namespace {

struct Column {
  std::vector<std::uint32_t> epochs;
  std::vector<double> loss;
  std::vector<double> accuracy;
};

Column column(const MetricsSeries& metrics, const std::string& dataset) {
  Column c;
  for (const auto& row : metrics.for_dataset(dataset)) {
    c.epochs.push_back(row.epoch);
    c.loss.push_back(row.loss);
    c.accuracy.push_back(row.accuracy);
  }
  if (c.epochs.empty()) throw Error(ErrorCode::UnknownDataset, "no metrics for dataset '" + dataset + "'");
  return c;
}

// First t where every series' gain to any later point stays below delta.
std::optional<std::size_t> saturation_index(const std::vector<double>& a, const std::vector<double>& b,
                                            double delta) {
  const std::size_t n = a.size();
  // suffix maxima over strictly later epochs
  std::vector<double> max_a(n, -INFINITY), max_b(n, -INFINITY);
  for (std::size_t t = n - 1; t-- > 0;) {
    max_a[t] = std::max(max_a[t + 1], a[t + 1]);
    max_b[t] = std::max(max_b[t + 1], b[t + 1]);
  }
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (max_a[t] - a[t] < delta && max_b[t] - b[t] < delta) return t;
  }
  return std::nullopt;
}

}  // namespace

PhaseReport detect_phases(const MetricsSeries& metrics, const std::string& train_dataset,
                          const std::string& id_dataset, const std::vector<std::string>& test_datasets,
                          std::uint32_t window, double delta) {
  validate_metrics(metrics);
  if (test_datasets.empty()) throw Error(ErrorCode::InvalidMetrics, "need at least one test dataset");
  const Column train = column(metrics, train_dataset);
  const Column id = column(metrics, id_dataset);
  const std::size_t n = train.epochs.size();
  if (n < 5) throw Error(ErrorCode::TooFewEpochs, "phase detection needs at least 5 epochs, got " + std::to_string(n));

  std::vector<double> test_loss(n, 0.0);
  for (const auto& name : test_datasets) {
    const Column c = column(metrics, name);
    if (c.epochs != train.epochs) {
      throw Error(ErrorCode::InvalidMetrics, "dataset '" + name + "' is logged at different epochs than '" +
                                                 train_dataset + "'");
    }
    for (std::size_t t = 0; t < n; ++t) test_loss[t] += c.loss[t] / static_cast<double>(test_datasets.size());
  }
  if (id.epochs != train.epochs) {
    throw Error(ErrorCode::InvalidMetrics, "ID metrics are logged at different epochs than train metrics");
  }

  PhaseReport report;
  report.window = window;
  report.delta = delta;
  report.epochs = train.epochs;
  report.train_loss = moving_average(train.loss, window);
  report.test_loss = moving_average(test_loss, window);
  report.train_accuracy = moving_average(train.accuracy, window);
  report.id_accuracy = moving_average(id.accuracy, window);

  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (report.test_loss[t + 1] > report.test_loss[t] && report.train_loss[t + 1] < report.train_loss[t]) {
      report.t1 = report.epochs[t];
      break;
    }
  }
  if (const auto k = saturation_index(report.train_accuracy, report.id_accuracy, delta)) {
    report.t2 = report.epochs[*k];
  }
  return report;
}

MetricsSeries synthetic_phase_metrics(const PhaseCurveSpec& spec) {
  if (spec.n_epochs < 5 || spec.loss_minimum < 1 || spec.saturation <= spec.loss_minimum ||
      spec.saturation >= spec.n_epochs) {
    throw Error(ErrorCode::ConfigInvalid, "need 1 <= loss_minimum < saturation < n_epochs");
  }
  Xoshiro256pp rng(derive_seed(spec.seed, "phase-curves"));
  MetricsSeries m;
  for (std::uint32_t t = 1; t <= spec.n_epochs; ++t) {
    const double td = static_cast<double>(t);
    const double train_loss = 2.0 * std::exp(-0.15 * td) + 0.01;
    const double dist = std::fabs(td - spec.loss_minimum);
    const double test_loss = 0.8 + 0.08 * dist;
    // Quadratic approach to the plateau, flat afterwards.
    const double gap = std::max(0.0, static_cast<double>(spec.saturation) - td);
    const double train_acc = 0.95 - 0.006 * gap * gap;
    const double id_acc = 0.85 - 0.006 * gap * gap;
    m.rows.push_back({t, "train", train_loss + spec.noise * rng.normal(),
                      std::clamp(train_acc + spec.noise * rng.normal(), 0.0, 1.0)});
    m.rows.push_back({t, "id", test_loss + spec.noise * rng.normal(),
                      std::clamp(id_acc + spec.noise * rng.normal(), 0.0, 1.0)});
  }
  return m;
}

}  // namespace clens
