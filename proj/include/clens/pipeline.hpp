#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clens/manifest.hpp"
#include "clens/partition.hpp"
#include "clens/scoring.hpp"
#include "clens/synth.hpp"
#include "clens/trainer.hpp"

namespace clens {

enum class OutputFormat { Csv, Structured };

/// Everything a subcommand needs. Paths are kept out of the config hash so
/// that the same parameters give the same artifacts in any directory.
struct PipelineConfig {
  std::filesystem::path out_dir = ".";
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> data_dir;

  std::uint64_t seed = 0;
  std::uint32_t n_bins = kDefaultBins;
  std::optional<EpochWindow> window;
  std::optional<std::uint32_t> epoch;
  std::optional<std::pair<double, double>> thresholds;
  std::uint32_t tail_start = kDefaultTailStart;
  std::uint32_t k = 10;
  bool mistakes_only = false;
  OutputFormat format = OutputFormat::Csv;
  std::optional<std::string> dataset;
  std::string which = "lowest";

  // gen
  std::string preset = "mixture";
  std::optional<SynthConfig> synth;
  double corruption = 0.10;
  double color_corr = 0.80;
  double shift = 2.0;
  std::uint32_t resample_size = 0;  // 0: same size as the ID set
  std::string resample_name = "ood_resampled";

  // train
  TrainConfig train;
  std::vector<std::vector<std::uint32_t>> archs{{16}, {32}};
  std::uint32_t replicas = 4;

  nlohmann::json to_json() const;
  /// Hash of to_json() plus the command name.
  std::string hash(std::string_view command) const;
};

/// Overlays keys present in `doc` onto `base`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, PipelineConfig base = {});

EpochWindow parse_window(std::string_view text);
std::pair<double, double> parse_thresholds(std::string_view text);

/// Advisory lock on <dir>/.clens.lock, released on destruction.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

struct ExtremeRow {
  std::size_t rank = 0;
  std::size_t sample_index = 0;
  double confusion = 0.0;
  std::optional<std::uint32_t> label;
  std::uint32_t prediction = 0;  // ensemble consensus at the last epoch
  std::string tags;
};

/// Top-k samples by confusion score, ties to the lower index.
std::vector<ExtremeRow> list_extremes(const Manifest& manifest, const std::string& dataset, std::size_t k,
                                      const std::string& which, bool mistakes_only,
                                      std::optional<EpochWindow> window = std::nullopt);

/// Bin-tilted target ratios: r_k proportional to ratio_k * exp(shift * center_k / ln C).
std::vector<double> tilted_ratios(const BinPartition& partition, double shift, std::uint32_t n_classes);

// Subcommands. Each returns the artifacts it wrote.
using Artifacts = std::vector<std::filesystem::path>;
Artifacts cmd_gen(const PipelineConfig& config);
Artifacts cmd_train(const PipelineConfig& config);
Artifacts cmd_score(const PipelineConfig& config);
Artifacts cmd_partition(const PipelineConfig& config);
Artifacts cmd_predict(const PipelineConfig& config);
Artifacts cmd_phases(const PipelineConfig& config);
Artifacts cmd_fit(const PipelineConfig& config);
Artifacts cmd_extremes(const PipelineConfig& config);
Artifacts cmd_report(const PipelineConfig& config);

/// Manifest entries for trained runs; paths relative to `base_dir`.
ManifestSpec write_runs(const std::vector<RunOutput>& runs, const std::filesystem::path& base_dir,
                        const std::string& provenance);

}  // namespace clens
