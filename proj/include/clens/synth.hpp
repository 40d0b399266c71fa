#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "clens/proba_log.hpp"

namespace clens {

struct ClassSpecificSpurious {
  std::uint32_t source = 0;
  std::uint32_t target = 0;
  double strength = 0.0;
};

struct WeakSpurious {
  std::uint32_t dim = 0;  // index into the nuisance block
  std::vector<std::uint32_t> classes;
  double strength = 0.0;
};

/// A shifted evaluation split: rates are multiplied by the scales below.
struct OodSpec {
  std::string name;
  std::uint32_t n_samples = 1000;
  double ambiguous_rate = 0.2;
  double class_specific_scale = 1.0;
  double weak_scale = 1.0;
};

struct SynthConfig {
  std::uint32_t n_classes = 10;
  std::uint32_t core_dims = 8;
  std::uint32_t nuisance_dims = 8;
  /// Distance of each class core mean from the origin, in noise-sigma units.
  double separation = 3.0;
  /// Length of the nuisance signatures.
  double nuisance_scale = 2.0;
  /// Fraction of samples whose core mean is shrunk toward the origin.
  double ambiguous_rate = 0.2;
  double ambiguous_shrink = 0.25;
  double corruption_rate = 0.0;  // train labels only
  std::vector<ClassSpecificSpurious> class_specific;
  std::vector<WeakSpurious> weak;
  std::uint32_t n_train = 2000;
  std::uint32_t n_id = 2000;
  std::vector<OodSpec> ood;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& doc);

struct SynthDataset {
  std::string name;
  std::uint32_t n_classes = 0;
  std::uint32_t n_features = 0;
  std::vector<float> features;  // row-major N x n_features
  LabelVec labels;
  LabelVec latent;
  /// Tags per sample, ';'-joined (same convention as the tags CSV).
  std::vector<std::string> tags;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {features.data() + i * n_features, n_features}; }
};

struct DatasetBundle {
  SynthDataset train;
  SynthDataset id;
  std::vector<SynthDataset> ood;
};

DatasetBundle gen_mixture(const SynthConfig& config);

/// Default mixture preset: 10 classes, label noise, one class-specific and one
/// weak spurious correlation, and two shifted splits.
SynthConfig mixture_preset(std::uint64_t seed);

struct ResampleResult {
  SynthDataset dataset;
  std::vector<std::size_t> source_index;  // row of `id` behind each output row
  std::vector<std::size_t> target_counts;
};

/// Draws n_out samples with replacement so that bin k (by `scores` over
/// [0, ln C]) holds round(target_ratios[k] * n_out) of them, largest-remainder
/// rounding with ties to the lower bin.
ResampleResult resample_by_bins(const SynthDataset& id, std::span<const double> scores,
                                std::span<const double> target_ratios, std::size_t n_out, std::uint64_t seed,
                                const std::string& name = "resampled");

/// Largest-remainder apportionment of `total` by `ratios`.
std::vector<std::size_t> largest_remainder(std::span<const double> ratios, std::size_t total);

/// Rows of `log` picked by `index`, in order.
ProbLog gather_rows(const ProbLog& log, std::span<const std::size_t> index);

/// Two classes; class 0 is red with probability color_corr, class 1 green.
/// Returns {train, ood_all_green, ood_all_red} plus an ID split.
DatasetBundle gen_colored_two_class(double corruption = 0.10, double color_corr = 0.80, std::uint64_t seed = 0,
                                    std::uint32_t n_train = 2000, std::uint32_t n_eval = 2000);

std::string encode_features(const SynthDataset& data);
/// Restores name, dims and features; labels and tags are stored separately.
SynthDataset decode_features(std::string_view bytes);

/// Writes <name>.cft, <name>.labels.csv and <name>.tags.csv under `dir`.
void write_dataset(const SynthDataset& data, const std::filesystem::path& dir,
                   const std::string& header_line = {});
SynthDataset read_dataset(const std::filesystem::path& dir, const std::string& name, std::uint32_t n_classes);

}  // namespace clens
