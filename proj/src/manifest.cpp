#include "clens/manifest.hpp"

#include <algorithm>
#include <set>

#include "clens/error.hpp"
#include "clens/io.hpp"

namespace clens {

using nlohmann::json;

std::string_view role_name(DatasetRole role) {
  switch (role) {
    case DatasetRole::Train: return "train";
    case DatasetRole::Id: return "id";
    case DatasetRole::Ood: return "ood";
  }
  return "?";
}

namespace {

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::SchemaError, what); }

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) schema(where + ": missing '" + key + "'");
  return obj.at(key);
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string() || v.get<std::string>().empty()) schema(where + ": '" + key + "' must be a non-empty string");
  return v.get<std::string>();
}

std::uint64_t require_uint(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_unsigned()) schema(where + ": '" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::optional<std::filesystem::path> optional_path(const json& obj, const char* key,
                                                   const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  if (!obj.at(key).is_string()) schema(where + ": '" + key + "' must be a path string");
  return std::filesystem::path(obj.at(key).get<std::string>());
}

DatasetRole parse_role(const std::string& text, const std::string& where) {
  if (text == "train") return DatasetRole::Train;
  if (text == "id") return DatasetRole::Id;
  if (text == "ood") return DatasetRole::Ood;
  schema(where + ": role must be train, id or ood (got '" + text + "')");
}

}  // namespace

ManifestSpec manifest_from_json(const json& doc) {
  if (!doc.is_object()) schema("manifest must be an object");
  ManifestSpec spec;
  const json& datasets = require(doc, "datasets", "manifest");
  if (!datasets.is_array()) schema("'datasets' must be an array");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const json& d = datasets[i];
    const std::string where = "datasets[" + std::to_string(i) + "]";
    DatasetEntry entry;
    entry.name = require_string(d, "name", where);
    entry.role = parse_role(require_string(d, "role", where), where);
    const auto n = require_uint(d, "n_samples", where);
    if (n == 0 || n > UINT32_MAX) schema(where + ": n_samples must be in [1, 2^32)");
    entry.n_samples = static_cast<std::uint32_t>(n);
    entry.labels_path = optional_path(d, "labels_path", where);
    entry.tags_path = optional_path(d, "ground_truth_tags_path", where);
    spec.datasets.push_back(std::move(entry));
  }
  const json& runs = require(doc, "runs", "manifest");
  if (!runs.is_array()) schema("'runs' must be an array");
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const json& r = runs[i];
    const std::string where = "runs[" + std::to_string(i) + "]";
    RunEntry entry;
    entry.model_id = require_string(r, "model_id", where);
    entry.family = require_string(r, "family", where);
    entry.seed = require_uint(r, "seed", where);
    entry.param_count = require_uint(r, "param_count", where);
    const json& logs = require(r, "logs", where);
    if (!logs.is_object() || logs.empty()) schema(where + ": 'logs' must map dataset names to CPL paths");
    for (const auto& [name, path] : logs.items()) {
      if (!path.is_string()) schema(where + ": log path for '" + name + "' must be a string");
      entry.log_paths.emplace(name, path.get<std::string>());
    }
    entry.metrics_path = optional_path(r, "metrics_path", where);
    spec.runs.push_back(std::move(entry));
  }
  if (doc.contains("scoring_ensemble")) {
    const json& ids = doc.at("scoring_ensemble");
    if (!ids.is_array()) schema("'scoring_ensemble' must be an array of model ids");
    for (const auto& id : ids) {
      if (!id.is_string()) schema("'scoring_ensemble' entries must be strings");
      spec.scoring_ensemble.push_back(id.get<std::string>());
    }
  }
  return spec;
}

json manifest_to_json(const ManifestSpec& spec) {
  json doc = json::object();
  json datasets = json::array();
  for (const auto& d : spec.datasets) {
    json entry = {{"name", d.name}, {"role", std::string(role_name(d.role))}, {"n_samples", d.n_samples}};
    if (d.labels_path) entry["labels_path"] = d.labels_path->generic_string();
    if (d.tags_path) entry["ground_truth_tags_path"] = d.tags_path->generic_string();
    datasets.push_back(std::move(entry));
  }
  json runs = json::array();
  for (const auto& r : spec.runs) {
    json logs = json::object();
    for (const auto& [name, path] : r.log_paths) logs[name] = path.generic_string();
    json entry = {{"model_id", r.model_id},       {"family", r.family}, {"seed", r.seed},
                  {"param_count", r.param_count}, {"logs", logs}};
    if (r.metrics_path) entry["metrics_path"] = r.metrics_path->generic_string();
    runs.push_back(std::move(entry));
  }
  doc["datasets"] = std::move(datasets);
  doc["runs"] = std::move(runs);
  if (!spec.scoring_ensemble.empty()) doc["scoring_ensemble"] = spec.scoring_ensemble;
  return doc;
}

ManifestSpec merge_manifests(const ManifestSpec& a, const ManifestSpec& b) {
  ManifestSpec out = a;
  for (const auto& d : b.datasets) {
    auto it = std::find_if(out.datasets.begin(), out.datasets.end(),
                           [&](const DatasetEntry& e) { return e.name == d.name; });
    if (it == out.datasets.end()) {
      out.datasets.push_back(d);
      continue;
    }
    if (it->role != d.role || it->n_samples != d.n_samples) {
      schema("fragments disagree on dataset '" + d.name + "'");
    }
    if (!it->labels_path) it->labels_path = d.labels_path;
    if (!it->tags_path) it->tags_path = d.tags_path;
  }
  for (const auto& r : b.runs) {
    const bool dup = std::any_of(out.runs.begin(), out.runs.end(),
                                 [&](const RunEntry& e) { return e.model_id == r.model_id; });
    if (dup) schema("model id '" + r.model_id + "' appears in both fragments");
    out.runs.push_back(r);
  }
  for (const auto& id : b.scoring_ensemble) {
    if (std::find(out.scoring_ensemble.begin(), out.scoring_ensemble.end(), id) == out.scoring_ensemble.end()) {
      out.scoring_ensemble.push_back(id);
    }
  }
  return out;
}

std::vector<std::string> parse_tags(std::string_view text, std::size_t expected_n) {
  const auto lines = data_lines(text);
  if (lines.empty() || lines.front() != "sample_index,tags") {
    throw Error(ErrorCode::ParseError, "tags CSV must start with header sample_index,tags");
  }
  std::vector<std::string> tags(expected_n);
  std::vector<bool> seen(expected_n, false);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto comma = lines[i].find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::ParseError, "bad tags row: " + lines[i]);
    const auto index = parse_uint(std::string_view(lines[i]).substr(0, comma), "sample_index");
    if (index >= expected_n || seen[index]) {
      throw Error(ErrorCode::LengthMismatch, "tags row index out of range or repeated: " + lines[i]);
    }
    seen[index] = true;
    tags[index] = lines[i].substr(comma + 1);
  }
  if (lines.size() - 1 != expected_n) {
    throw Error(ErrorCode::LengthMismatch, "expected " + std::to_string(expected_n) + " tag rows");
  }
  return tags;
}

std::string format_tags(const std::vector<std::string>& tags) {
  std::string out = "sample_index,tags\n";
  for (std::size_t i = 0; i < tags.size(); ++i) out += std::to_string(i) + ',' + tags[i] + '\n';
  return out;
}

const DatasetEntry& Manifest::dataset(const std::string& name) const {
  for (const auto& d : spec.datasets) {
    if (d.name == name) return d;
  }
  throw Error(ErrorCode::UnknownDataset, "no dataset named '" + name + "'");
}

const DatasetEntry& Manifest::id_dataset() const {
  for (const auto& d : spec.datasets) {
    if (d.role == DatasetRole::Id) return d;
  }
  throw Error(ErrorCode::SchemaError, "manifest has no id dataset");
}

std::vector<const DatasetEntry*> Manifest::datasets_with_role(DatasetRole role) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& d : spec.datasets) {
    if (d.role == role) out.push_back(&d);
  }
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->name < b->name; });
  return out;
}

const RunEntry& Manifest::run(const std::string& model_id) const {
  for (const auto& r : spec.runs) {
    if (r.model_id == model_id) return r;
  }
  throw Error(ErrorCode::UnknownModel, "no run with model_id '" + model_id + "'");
}

bool Manifest::has_log(const std::string& model_id, const std::string& dataset) const {
  return loaded_logs.count({model_id, dataset}) != 0;
}

const ProbLog& Manifest::log(const std::string& model_id, const std::string& dataset) const {
  run(model_id);
  this->dataset(dataset);
  auto it = loaded_logs.find({model_id, dataset});
  if (it == loaded_logs.end()) {
    throw Error(ErrorCode::UnknownDataset, "run '" + model_id + "' has no log for '" + dataset + "'");
  }
  return *it->second;
}

const LabelVec* Manifest::labels(const std::string& name) const {
  auto it = loaded_labels.find(name);
  return it == loaded_labels.end() ? nullptr : &it->second;
}

const std::vector<std::string>* Manifest::tags(const std::string& name) const {
  auto it = loaded_tags.find(name);
  return it == loaded_tags.end() ? nullptr : &it->second;
}

const MetricsSeries* Manifest::metrics(const std::string& model_id) const {
  auto it = loaded_metrics.find(model_id);
  return it == loaded_metrics.end() ? nullptr : &it->second;
}

std::vector<std::string> Manifest::model_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : spec.runs) ids.push_back(r.model_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> Manifest::scoring_ids() const {
  if (spec.scoring_ensemble.empty()) return model_ids();
  auto ids = spec.scoring_ensemble;
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<const ProbLog*> Manifest::logs_for(const std::vector<std::string>& model_ids,
                                               const std::string& dataset) const {
  std::vector<const ProbLog*> out;
  out.reserve(model_ids.size());
  for (const auto& id : model_ids) out.push_back(&log(id, dataset));
  return out;
}

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

Manifest load_manifest(const ManifestSpec& spec, const std::filesystem::path& base_dir) {
  Manifest m;
  m.spec = spec;
  m.base_dir = base_dir;

  std::set<std::string> names;
  std::size_t id_count = 0;
  for (const auto& d : spec.datasets) {
    if (!names.insert(d.name).second) schema("duplicate dataset name '" + d.name + "'");
    if (d.role == DatasetRole::Id) ++id_count;
  }
  if (id_count != 1) schema("exactly one dataset must have role 'id' (found " + std::to_string(id_count) + ")");
  std::set<std::string> ids;
  for (const auto& r : spec.runs) {
    if (!ids.insert(r.model_id).second) schema("duplicate model_id '" + r.model_id + "'");
  }
  if (spec.runs.empty()) schema("manifest lists no runs");
  for (const auto& id : spec.scoring_ensemble) {
    if (!ids.count(id)) schema("scoring_ensemble references unknown model '" + id + "'");
  }

  // Logs: decode each distinct file once.
  std::map<std::filesystem::path, std::shared_ptr<const ProbLog>> by_path;
  std::optional<std::pair<std::string, std::uint32_t>> first_c;
  for (const auto& r : spec.runs) {
    for (const auto& [dataset, rel] : r.log_paths) {
      if (!names.count(dataset)) schema("run '" + r.model_id + "' logs unknown dataset '" + dataset + "'");
      const auto path = m.resolve(rel);
      auto& shared = by_path[path];
      if (!shared) shared = std::make_shared<const ProbLog>(read_cpl(path));
      const ProbLog& log = *shared;
      if (!first_c) {
        first_c = {r.model_id, log.n_classes};
      } else if (log.n_classes != first_c->second) {
        throw Error(ErrorCode::InconsistentClassCount,
                    "run '" + r.model_id + "' has C=" + std::to_string(log.n_classes) + " but run '" +
                        first_c->first + "' has C=" + std::to_string(first_c->second));
      }
      if (log.n_samples != m.dataset(dataset).n_samples) {
        throw Error(ErrorCode::LengthMismatch, "log of '" + r.model_id + "' on '" + dataset + "' has " +
                                                   std::to_string(log.n_samples) + " samples, dataset has " +
                                                   std::to_string(m.dataset(dataset).n_samples));
      }
      m.loaded_logs[{r.model_id, dataset}] = shared;
    }
    for (const auto& d : spec.datasets) {
      if (d.role != DatasetRole::Train && !r.log_paths.count(d.name)) {
        schema("run '" + r.model_id + "' has no log for dataset '" + d.name + "'");
      }
    }
    if (r.metrics_path) m.loaded_metrics.emplace(r.model_id, read_metrics(m.resolve(*r.metrics_path)));
  }
  m.n_classes = first_c->second;

  for (const auto& d : spec.datasets) {
    if (!d.labels_path) {
      if (d.role == DatasetRole::Id) throw Error(ErrorCode::MissingIdLabels, "id dataset '" + d.name + "' has no labels_path");
      if (d.role == DatasetRole::Train) schema("train dataset '" + d.name + "' has no labels_path");
    } else {
      m.loaded_labels.emplace(d.name, read_labels(m.resolve(*d.labels_path), d.n_samples, m.n_classes));
    }
    if (d.tags_path) m.loaded_tags.emplace(d.name, parse_tags(read_file(m.resolve(*d.tags_path)), d.n_samples));
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    schema(std::string("manifest is not valid JSON: ") + e.what());
  }
  return load_manifest(manifest_from_json(doc), path.parent_path());
}

void write_manifest(const ManifestSpec& spec, const std::filesystem::path& path,
                    const std::string& provenance) {
  json doc = manifest_to_json(spec);
  if (!provenance.empty()) doc["provenance"] = provenance;
  write_file_atomic(path, doc.dump(2) + "\n");
}

}  // namespace clens
