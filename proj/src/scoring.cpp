#include "clens/scoring.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "clens/error.hpp"
#include "clens/parallel.hpp"

namespace clens {

void ExactF32Sum::add(float value) noexcept {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t exponent = (bits >> 23) & 0xffu;
  std::uint64_t mantissa = bits & 0x7fffffu;
  unsigned shift = 0;
  if (exponent != 0) {
    mantissa |= 0x800000u;
    shift = exponent - 1;
  }
  if (mantissa == 0) return;
  const unsigned limb = shift / 64;
  const unsigned bit = shift % 64;
  const std::uint64_t lo = mantissa << bit;
  const std::uint64_t hi = bit == 0 ? 0 : mantissa >> (64 - bit);

  std::uint64_t before = limbs_[limb];
  limbs_[limb] += lo;
  std::uint64_t carry = limbs_[limb] < before ? 1 : 0;
  for (unsigned i = limb + 1; i < limbs_.size() && (carry != 0 || (i == limb + 1 && hi != 0)); ++i) {
    const std::uint64_t addend = (i == limb + 1 ? hi : 0) + carry;  // hi < 2^24, no overflow
    before = limbs_[i];
    limbs_[i] += addend;
    carry = limbs_[i] < before ? 1 : 0;
  }
}

double ExactF32Sum::value() const noexcept {
  int top = -1;
  for (int i = static_cast<int>(limbs_.size()) - 1; i >= 0; --i) {
    if (limbs_[i] != 0) {
      top = i * 64 + 63 - std::countl_zero(limbs_[i]);
      break;
    }
  }
  if (top < 0) return 0.0;
  const int length = top + 1;
  if (length <= 53) {
    return std::ldexp(static_cast<double>(limbs_[0]), -149);
  }
  // Round the top 53 bits to nearest, ties to even.
  const int low = length - 53;
  const int li = low / 64;
  const int lb = low % 64;
  std::uint64_t window = limbs_[li] >> lb;
  if (lb != 0 && li + 1 < static_cast<int>(limbs_.size())) window |= limbs_[li + 1] << (64 - lb);
  std::uint64_t mantissa = window & ((1ULL << 53) - 1);
  const int round_pos = low - 1;
  const bool round = ((limbs_[round_pos / 64] >> (round_pos % 64)) & 1u) != 0;
  bool sticky = (limbs_[round_pos / 64] & ((1ULL << (round_pos % 64)) - 1)) != 0;
  for (int i = 0; i < round_pos / 64 && !sticky; ++i) sticky = limbs_[i] != 0;
  int exponent = low - 149;
  if (round && (sticky || (mantissa & 1u))) {
    ++mantissa;
    if (mantissa == (1ULL << 53)) {
      mantissa >>= 1;
      ++exponent;
    }
  }
  return std::ldexp(static_cast<double>(mantissa), exponent);
}

EnsembleView::EnsembleView(std::vector<const ProbLog*> runs) : runs_(std::move(runs)) {
  if (runs_.empty()) throw Error(ErrorCode::ShapeMismatch, "ensemble has no runs");
  std::stable_sort(runs_.begin(), runs_.end(),
                   [](const ProbLog* a, const ProbLog* b) { return a->model_id < b->model_id; });
  n_epochs_ = runs_.front()->n_epochs;
  for (const ProbLog* run : runs_) {
    if (run->n_samples != runs_.front()->n_samples || run->n_classes != runs_.front()->n_classes) {
      throw Error(ErrorCode::ShapeMismatch, "run '" + run->model_id + "' has shape (N=" +
                                                std::to_string(run->n_samples) + ", C=" +
                                                std::to_string(run->n_classes) + ") unlike the rest");
    }
    n_epochs_ = std::min(n_epochs_, run->n_epochs);
  }
}

EnsembleView EnsembleView::of(std::span<const ProbLog> logs) {
  std::vector<const ProbLog*> runs;
  runs.reserve(logs.size());
  for (const auto& log : logs) runs.push_back(&log);
  return EnsembleView(std::move(runs));
}

void EnsembleView::check_epoch(std::uint32_t epoch) const {
  if (epoch < 1 || epoch > n_epochs_) {
    throw Error(ErrorCode::EpochOutOfRange,
                "epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(n_epochs_) + "]");
  }
}

void EnsembleView::check_window(EpochWindow window) const {
  if (window.first < 1 || window.first > window.last || window.last > n_epochs_) {
    throw Error(ErrorCode::WindowOutOfRange, "window [" + std::to_string(window.first) + ", " +
                                                 std::to_string(window.last) + "] outside [1, " +
                                                 std::to_string(n_epochs_) + "]");
  }
}

namespace {

// Entropy of p / sum with the 0 ln 0 cutoff, clamped into [0, ln C].
double entropy_scaled(std::span<const double> p, double sum) {
  double h = 0.0;
  for (double v : p) {
    if (v <= kZeroProbabilityCutoff) continue;
    const double q = v / sum;
    h -= q * std::log(q);
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(p.size())));
}

double sum_of(std::span<const double> p) {
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

std::uint32_t argmax(std::span<const double> p) {
  std::uint32_t best = 0;
  for (std::uint32_t j = 1; j < p.size(); ++j) {
    if (p[j] > p[best]) best = j;
  }
  return best;
}

// Entropy scores for all samples at epochs [first, last]; out[i * width + k].
std::vector<double> entropy_block(const EnsembleView& logs, EpochWindow window) {
  const std::size_t n = logs.n_samples();
  const std::size_t width = window.size();
  std::vector<double> out(n * width);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> mean(logs.n_classes());
    for (std::uint32_t t = window.first; t <= window.last; ++t) {
      ensemble_mean_into(logs, t, i, mean);
      out[i * width + (t - window.first)] = entropy_scaled(mean, sum_of(mean));
    }
  });
  return out;
}

double mean_of(const double* values, std::size_t count) {
  double s = 0.0;
  for (std::size_t k = 0; k < count; ++k) s += values[k];
  return s / static_cast<double>(count);
}

double population_std(const double* values, std::size_t count) {
  const double mean = mean_of(values, count);
  double ss = 0.0;
  for (std::size_t k = 0; k < count; ++k) ss += (values[k] - mean) * (values[k] - mean);
  return std::sqrt(ss / static_cast<double>(count));
}

}  // namespace

double entropy(std::span<const double> p) {
  if (p.empty()) throw Error(ErrorCode::NotADistribution, "empty probability vector");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::NotADistribution, "negative or non-finite probability");
    }
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::NotADistribution, "probabilities sum to " + std::to_string(sum));
  }
  return entropy_scaled(p, sum);
}

void ensemble_mean_into(const EnsembleView& logs, std::uint32_t epoch, std::size_t sample,
                        std::span<double> out) {
  logs.check_epoch(epoch);
  const std::size_t c = logs.n_classes();
  const double m = static_cast<double>(logs.size());
  for (std::size_t j = 0; j < c; ++j) {
    ExactF32Sum acc;
    for (std::size_t k = 0; k < logs.size(); ++k) acc.add(logs.run(k).row(epoch, sample)[j]);
    out[j] = acc.value() / m;
  }
}

std::vector<double> ensemble_mean(const EnsembleView& logs, std::uint32_t epoch, std::size_t sample) {
  if (sample >= logs.n_samples()) throw Error(ErrorCode::ShapeMismatch, "sample index out of range");
  std::vector<double> out(logs.n_classes());
  ensemble_mean_into(logs, epoch, sample, out);
  return out;
}

std::vector<double> entropy_scores_at(const EnsembleView& logs, std::uint32_t epoch) {
  logs.check_epoch(epoch);
  return entropy_block(logs, {epoch, epoch});
}

std::vector<double> confusion_scores(const EnsembleView& logs, EpochWindow window) {
  logs.check_window(window);
  const std::size_t width = window.size();
  const auto block = entropy_block(logs, window);
  std::vector<double> out(logs.n_samples());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean_of(&block[i * width], width);
  return out;
}

std::vector<double> entropy_std(const EnsembleView& logs, std::uint32_t tail_start) {
  if (tail_start < 1) throw Error(ErrorCode::EpochOutOfRange, "tail start must be >= 1");
  if (tail_start >= logs.n_epochs()) {
    throw Error(ErrorCode::TailTooShort, "tail from epoch " + std::to_string(tail_start) + " with T=" +
                                             std::to_string(logs.n_epochs()) + " has fewer than 2 epochs");
  }
  const EpochWindow tail{tail_start, logs.n_epochs()};
  const std::size_t width = tail.size();
  const auto block = entropy_block(logs, tail);
  std::vector<double> out(logs.n_samples());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = population_std(&block[i * width], width);
  return out;
}

std::vector<std::uint32_t> ensemble_predict(const EnsembleView& logs, std::uint32_t epoch) {
  logs.check_epoch(epoch);
  std::vector<std::uint32_t> out(logs.n_samples());
  parallel_for(out.size(), [&](std::size_t i) {
    std::vector<double> mean(logs.n_classes());
    ensemble_mean_into(logs, epoch, i, mean);
    out[i] = argmax(mean);
  });
  return out;
}

std::vector<std::uint32_t> argmax_predict(const ProbLog& log, std::uint32_t epoch) {
  if (epoch < 1 || epoch > log.n_epochs) {
    throw Error(ErrorCode::EpochOutOfRange, "epoch " + std::to_string(epoch) + " outside log '" +
                                                log.model_id + "'");
  }
  std::vector<std::uint32_t> out(log.n_samples);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = log.row(epoch, i);
    std::uint32_t best = 0;
    for (std::uint32_t j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = best;
  }
  return out;
}

double ScoreTable::mean_confusion() const {
  return confusion.empty() ? 0.0 : mean_of(confusion.data(), confusion.size());
}

ScoreTable score_table(const EnsembleView& logs, std::string dataset_name,
                       std::optional<EpochWindow> window, std::uint32_t tail_start) {
  ScoreTable table;
  table.dataset_name = std::move(dataset_name);
  table.window = window.value_or(logs.full_window());
  logs.check_window(table.window);
  table.n_epochs = logs.n_epochs();
  table.tail_start = tail_start;
  table.entropy_series = entropy_block(logs, logs.full_window());

  const std::size_t n = logs.n_samples();
  const std::size_t t_all = table.n_epochs;
  table.confusion.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    table.confusion[i] = mean_of(&table.entropy_series[i * t_all + (table.window.first - 1)],
                                 table.window.size());
  }
  if (tail_start >= 1 && tail_start < table.n_epochs) {
    table.entropy_std.resize(n);
    const std::size_t width = table.n_epochs - tail_start + 1;
    for (std::size_t i = 0; i < n; ++i) {
      table.entropy_std[i] = population_std(&table.entropy_series[i * t_all + (tail_start - 1)], width);
    }
  }
  return table;
}

}  // namespace clens
