#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clens/proba_log.hpp"

namespace clens {

enum class DatasetRole { Train, Id, Ood };

std::string_view role_name(DatasetRole role);

struct DatasetEntry {
  std::string name;
  DatasetRole role = DatasetRole::Id;
  std::uint32_t n_samples = 0;
  std::optional<std::filesystem::path> labels_path;
  std::optional<std::filesystem::path> tags_path;
};

struct RunEntry {
  std::string model_id;
  std::string family;
  std::uint64_t seed = 0;
  std::uint64_t param_count = 0;
  /// dataset name -> CPL file
  std::map<std::string, std::filesystem::path> log_paths;
  std::optional<std::filesystem::path> metrics_path;
};

/// The manifest as written on disk (JSON). Relative paths resolve against the
/// manifest's directory.
struct ManifestSpec {
  std::vector<DatasetEntry> datasets;
  std::vector<RunEntry> runs;
  /// Runs whose ensemble defines confusion scores; empty means all runs.
  std::vector<std::string> scoring_ensemble;
};

ManifestSpec manifest_from_json(const nlohmann::json& doc);
nlohmann::json manifest_to_json(const ManifestSpec& spec);

/// Concatenates fragments (e.g. one per training job). Datasets with the same
/// name must agree; runs must not repeat model ids.
ManifestSpec merge_manifests(const ManifestSpec& a, const ManifestSpec& b);

/// A manifest with every referenced file loaded and cross-checked.
class Manifest {
 public:
  ManifestSpec spec;
  std::filesystem::path base_dir;
  std::uint32_t n_classes = 0;

  const DatasetEntry& dataset(const std::string& name) const;
  const DatasetEntry& id_dataset() const;
  std::vector<const DatasetEntry*> datasets_with_role(DatasetRole role) const;
  const RunEntry& run(const std::string& model_id) const;

  bool has_log(const std::string& model_id, const std::string& dataset) const;
  const ProbLog& log(const std::string& model_id, const std::string& dataset) const;
  const LabelVec* labels(const std::string& dataset) const;
  const std::vector<std::string>* tags(const std::string& dataset) const;
  const MetricsSeries* metrics(const std::string& model_id) const;

  /// Model ids of the scoring ensemble (sorted).
  std::vector<std::string> scoring_ids() const;
  /// All model ids (sorted).
  std::vector<std::string> model_ids() const;

  /// Logs of `model_ids` on `dataset`, in the given order.
  std::vector<const ProbLog*> logs_for(const std::vector<std::string>& model_ids,
                                       const std::string& dataset) const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;

  std::map<std::pair<std::string, std::string>, std::shared_ptr<const ProbLog>> loaded_logs;
  std::map<std::string, LabelVec> loaded_labels;
  std::map<std::string, std::vector<std::string>> loaded_tags;
  std::map<std::string, MetricsSeries> loaded_metrics;
};

/// Loads and validates. Logs that point to the same file are read once.
Manifest load_manifest(const ManifestSpec& spec, const std::filesystem::path& base_dir);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const ManifestSpec& spec, const std::filesystem::path& path,
                    const std::string& provenance = {});

/// Ground-truth tags CSV: header `sample_index,tags`, tags joined by ';'.
std::vector<std::string> parse_tags(std::string_view text, std::size_t expected_n);
std::string format_tags(const std::vector<std::string>& tags);

}  // namespace clens
