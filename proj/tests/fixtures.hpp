#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "clens/io.hpp"
#include "clens/manifest.hpp"
#include "clens/proba_log.hpp"

namespace fixtures {

struct DatasetSpec {
  std::string name;
  clens::DatasetRole role;
  clens::LabelVec labels;  // empty: no labels file
  std::vector<std::string> tags;
};

// model_id -> dataset -> log
using RunLogs = std::map<std::string, std::map<std::string, clens::ProbLog>>;

// Writes CPLs, labels, tags and manifest.json under `dir`; returns the manifest path.
inline std::filesystem::path write_world(const std::filesystem::path& dir, const std::vector<DatasetSpec>& datasets,
                                         const RunLogs& runs, const std::string& family = "toy") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  clens::ManifestSpec spec;
  for (const auto& d : datasets) {
    clens::DatasetEntry e;
    e.name = d.name;
    e.role = d.role;
    e.n_samples = static_cast<std::uint32_t>(runs.begin()->second.at(d.name).n_samples);
    if (!d.labels.empty()) {
      clens::write_file_atomic(dir / (d.name + ".labels.csv"), clens::format_labels(d.labels));
      e.labels_path = d.name + ".labels.csv";
    }
    if (!d.tags.empty()) {
      clens::write_file_atomic(dir / (d.name + ".tags.csv"), clens::format_tags(d.tags));
      e.tags_path = d.name + ".tags.csv";
    }
    spec.datasets.push_back(e);
  }
  std::uint64_t params = 100;
  for (const auto& [id, logs] : runs) {
    clens::RunEntry r;
    r.model_id = id;
    r.family = family;
    r.param_count = params;
    params *= 2;
    for (const auto& [name, log] : logs) {
      const fs::path rel = fs::path("logs") / (id + "_" + name + ".cpl");
      fs::create_directories(dir / "logs");
      clens::write_cpl(log, dir / rel);
      r.log_paths[name] = rel;
    }
    spec.runs.push_back(r);
  }
  clens::write_manifest(spec, dir / "manifest.json");
  return dir / "manifest.json";
}

}  // namespace fixtures
