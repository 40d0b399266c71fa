#include "clens/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "clens/error.hpp"
#include "clens/io.hpp"
#include "clens/models.hpp"
#include "clens/phases.hpp"
#include "clens/predictor.hpp"
#include "clens/rng.hpp"

namespace clens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

std::string_view format_name(OutputFormat f) { return f == OutputFormat::Csv ? "csv" : "structured"; }

class Csv {
 public:
  Csv(const std::string& provenance, std::string_view header) {
    text_ = provenance + "\n";
    text_ += header;
    text_ += '\n';
  }
  void row(std::initializer_list<std::string> fields) {
    bool first = true;
    for (const auto& f : fields) {
      if (!first) text_ += ',';
      text_ += f;
      first = false;
    }
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string num(std::uint32_t v) { return std::to_string(v); }
std::string opt(const std::optional<double>& v) { return format_optional(v); }
std::string opt(const std::optional<std::uint32_t>& v) { return v ? std::to_string(*v) : std::string(); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct Output {
  fs::path dir;
  std::string provenance;  // "# clens <version> config=<hash>"
  Artifacts written;

  void text(const std::string& name, const std::string& body) {
    write_file_atomic(dir / name, body);
    written.push_back(dir / name);
  }
  void structured(const std::string& name, json doc) {
    doc["provenance"] = provenance.substr(2);
    text(name, doc.dump(2) + "\n");
  }
};

Output open_output(const PipelineConfig& config, std::string_view command) {
  fs::create_directories(config.out_dir);
  return {config.out_dir, provenance_line(config.hash(command)), {}};
}

Manifest load(const PipelineConfig& config) {
  if (!config.manifest) config_error("this command needs --manifest");
  return read_manifest(*config.manifest);
}

fs::path rebase(const fs::path& p, const fs::path& from, const fs::path& to) {
  if (p.is_absolute()) return p;
  const fs::path target = fs::weakly_canonical(fs::absolute(from / p));
  const fs::path base = fs::weakly_canonical(fs::absolute(to));
  const fs::path rel = target.lexically_relative(base);
  return rel.empty() ? target : rel;
}

ManifestSpec rebase_spec(ManifestSpec spec, const fs::path& from, const fs::path& to) {
  for (auto& d : spec.datasets) {
    if (d.labels_path) d.labels_path = rebase(*d.labels_path, from, to);
    if (d.tags_path) d.tags_path = rebase(*d.tags_path, from, to);
  }
  for (auto& r : spec.runs) {
    for (auto& [name, path] : r.log_paths) path = rebase(path, from, to);
    if (r.metrics_path) r.metrics_path = rebase(*r.metrics_path, from, to);
  }
  return spec;
}

EnsembleView scoring_view(const Manifest& m, const std::string& dataset) {
  return EnsembleView(m.logs_for(m.scoring_ids(), dataset));
}

bool scored(const Manifest& m, const std::string& dataset) {
  const auto ids = m.scoring_ids();
  return std::all_of(ids.begin(), ids.end(), [&](const std::string& id) { return m.has_log(id, dataset); });
}

// ID first, then OOD sets in manifest order.
std::vector<std::string> eval_datasets(const Manifest& m) {
  std::vector<std::string> out{m.id_dataset().name};
  for (const auto* d : m.datasets_with_role(DatasetRole::Ood)) out.push_back(d->name);
  return out;
}

std::vector<double> partition_scores(const PipelineConfig& config, const EnsembleView& view) {
  if (config.epoch) return entropy_scores_at(view, *config.epoch);
  return confusion_scores(view, config.window.value_or(view.full_window()));
}

json window_json(const std::optional<EpochWindow>& w) {
  return w ? json::array({w->first, w->last}) : json(nullptr);
}

std::optional<double> threshold(const PipelineConfig& c, bool hi) {
  if (!c.thresholds) return std::nullopt;
  return hi ? c.thresholds->second : c.thresholds->first;
}

}  // namespace

json PipelineConfig::to_json() const {
  json archs_json = json::array();
  for (const auto& a : archs) archs_json.push_back(a);
  return {
      {"seed", seed},
      {"bins", n_bins},
      {"window", window_json(window)},
      {"epoch", epoch ? json(*epoch) : json(nullptr)},
      {"thresholds", thresholds ? json::array({thresholds->first, thresholds->second}) : json(nullptr)},
      {"tail_start", tail_start},
      {"k", k},
      {"mistakes_only", mistakes_only},
      {"format", std::string(format_name(format))},
      {"dataset", dataset ? json(*dataset) : json(nullptr)},
      {"which", which},
      {"preset", preset},
      {"synth", synth ? synth_config_to_json(*synth) : json(nullptr)},
      {"corruption", corruption},
      {"color_corr", color_corr},
      {"shift", shift},
      {"resample_size", resample_size},
      {"resample_name", resample_name},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"learning_rate", train.learning_rate},
        {"momentum", train.momentum},
        {"archs", archs_json},
        {"replicas", replicas}}},
  };
}

std::string PipelineConfig::hash(std::string_view command) const {
  std::string canonical(command);
  canonical += '\n';
  canonical += to_json().dump();
  return hex64(fnv1a64(canonical));
}

EpochWindow parse_window(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts.size() != 2) config_error("window must look like a:b");
  try {
    const auto a = parse_uint(parts[0], "window start");
    const auto b = parse_uint(parts[1], "window end");
    if (a > UINT32_MAX || b > UINT32_MAX) config_error("window bound too large");
    return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  } catch (const Error& e) {
    config_error(std::string("bad window: ") + e.what());
  }
}

std::pair<double, double> parse_thresholds(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts.size() != 2) config_error("thresholds must look like lo:hi");
  try {
    return {parse_double(parts[0], "lo"), parse_double(parts[1], "hi")};
  } catch (const Error& e) {
    config_error(std::string("bad thresholds: ") + e.what());
  }
}

PipelineConfig pipeline_config_from_json(const json& doc, PipelineConfig c) {
  if (!doc.is_object()) config_error("config must be a JSON object");
  try {
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("bins")) c.n_bins = doc.at("bins").get<std::uint32_t>();
    if (doc.contains("window") && !doc.at("window").is_null()) {
      const auto& w = doc.at("window");
      c.window = w.is_string() ? parse_window(w.get<std::string>())
                               : EpochWindow{w.at(0).get<std::uint32_t>(), w.at(1).get<std::uint32_t>()};
    }
    if (doc.contains("epoch") && !doc.at("epoch").is_null()) c.epoch = doc.at("epoch").get<std::uint32_t>();
    if (doc.contains("thresholds") && !doc.at("thresholds").is_null()) {
      const auto& t = doc.at("thresholds");
      c.thresholds = t.is_string() ? parse_thresholds(t.get<std::string>())
                                   : std::pair{t.at(0).get<double>(), t.at(1).get<double>()};
    }
    if (doc.contains("tail_start")) c.tail_start = doc.at("tail_start").get<std::uint32_t>();
    if (doc.contains("k")) c.k = doc.at("k").get<std::uint32_t>();
    if (doc.contains("preset")) c.preset = doc.at("preset").get<std::string>();
    if (doc.contains("synth") && !doc.at("synth").is_null()) c.synth = synth_config_from_json(doc.at("synth"));
    if (doc.contains("corruption")) c.corruption = doc.at("corruption").get<double>();
    if (doc.contains("color_corr")) c.color_corr = doc.at("color_corr").get<double>();
    if (doc.contains("shift")) c.shift = doc.at("shift").get<double>();
    if (doc.contains("resample_size")) c.resample_size = doc.at("resample_size").get<std::uint32_t>();
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.momentum = t.value("momentum", c.train.momentum);
      if (t.contains("archs")) c.archs = t.at("archs").get<std::vector<std::vector<std::uint32_t>>>();
      c.replicas = t.value("replicas", c.replicas);
    }
  } catch (const json::exception& e) {
    config_error(std::string("bad config: ") + e.what());
  }
  return c;
}

DirLock::DirLock(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path path = dir / ".clens.lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::IoFailure, "cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::IoFailure, "output directory " + dir.string() + " is locked by another clens process");
  }
}

DirLock::~DirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::vector<ExtremeRow> list_extremes(const Manifest& manifest, const std::string& dataset, std::size_t k,
                                      const std::string& which, bool mistakes_only,
                                      std::optional<EpochWindow> window) {
  if (which != "lowest" && which != "highest") config_error("--which must be lowest or highest");
  manifest.dataset(dataset);
  const auto view = scoring_view(manifest, dataset);
  const auto scores = confusion_scores(view, window.value_or(view.full_window()));
  const auto preds = ensemble_predict(view, view.n_epochs());
  const LabelVec* labels = manifest.labels(dataset);
  const auto* tags = manifest.tags(dataset);
  if (mistakes_only && labels == nullptr) config_error("--mistakes-only needs labels for '" + dataset + "'");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  const bool lowest = which == "lowest";
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lowest ? scores[a] < scores[b] : scores[a] > scores[b];
  });
  std::vector<ExtremeRow> rows;
  for (std::size_t i : order) {
    if (rows.size() >= k) break;
    if (mistakes_only && preds[i] == (*labels)[i]) continue;
    ExtremeRow r;
    r.rank = rows.size() + 1;
    r.sample_index = i;
    r.confusion = scores[i];
    if (labels != nullptr) r.label = (*labels)[i];
    r.prediction = preds[i];
    if (tags != nullptr) r.tags = (*tags)[i];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<double> tilted_ratios(const BinPartition& partition, double shift, std::uint32_t n_classes) {
  const double max_score = std::log(static_cast<double>(n_classes));
  std::vector<double> out(partition.n_bins, 0.0);
  double sum = 0.0;
  for (std::uint32_t k = 0; k < partition.n_bins; ++k) {
    out[k] = partition.ratios[k] * std::exp(shift * partition.center(k) / max_score);
    sum += out[k];
  }
  for (auto& v : out) v /= sum;
  return out;
}

ManifestSpec write_runs(const std::vector<RunOutput>& runs, const fs::path& base_dir, const std::string& provenance) {
  ManifestSpec spec;
  for (const auto& run : runs) {
    RunEntry entry;
    entry.model_id = run.model_id;
    entry.family = run.family;
    entry.seed = run.seed;
    entry.param_count = run.param_count;
    const fs::path log_dir = fs::path("logs") / run.model_id;
    fs::create_directories(base_dir / log_dir);
    for (const auto& [dataset, log] : run.logs) {
      const fs::path rel = log_dir / (dataset + ".cpl");
      write_cpl(log, base_dir / rel);
      entry.log_paths[dataset] = rel;
    }
    fs::create_directories(base_dir / "metrics");
    const fs::path metrics_rel = fs::path("metrics") / (run.model_id + ".csv");
    write_file_atomic(base_dir / metrics_rel, provenance + "\n" + format_metrics(run.metrics));
    entry.metrics_path = metrics_rel;
    spec.runs.push_back(std::move(entry));
  }
  return spec;
}

namespace {

Artifacts gen_resampled(const PipelineConfig& config, Output& out) {
  const Manifest m = load(config);
  const std::string id_name = m.id_dataset().name;
  const auto view = scoring_view(m, id_name);
  const auto scores = confusion_scores(view, config.window.value_or(view.full_window()));
  const auto partition = bin_scores(scores, config.n_bins, m.n_classes);
  const auto target = tilted_ratios(partition, config.shift, m.n_classes);

  SynthDataset source;
  source.name = id_name;
  source.n_classes = m.n_classes;
  source.labels = *m.labels(id_name);
  source.latent = source.labels;
  const auto* tags = m.tags(id_name);
  source.tags = tags != nullptr ? *tags : std::vector<std::string>(source.labels.size());
  const std::size_t n_out = config.resample_size > 0 ? config.resample_size : source.size();
  const auto res = resample_by_bins(source, scores, target, n_out, config.seed, config.resample_name);

  const std::string& name = config.resample_name;
  out.text(name + ".labels.csv", out.provenance + "\n" + format_labels(res.dataset.labels));
  out.text(name + ".tags.csv", out.provenance + "\n" + format_tags(res.dataset.tags));

  ManifestSpec spec = rebase_spec(m.spec, m.base_dir, config.out_dir);
  for (const auto& d : spec.datasets) {
    if (d.name == name) config_error("manifest already has a dataset named '" + name + "'");
  }
  DatasetEntry entry;
  entry.name = name;
  entry.role = DatasetRole::Ood;
  entry.n_samples = static_cast<std::uint32_t>(n_out);
  entry.labels_path = name + ".labels.csv";
  entry.tags_path = name + ".tags.csv";
  spec.datasets.push_back(entry);
  for (auto& run : spec.runs) {
    const fs::path rel = fs::path("logs") / run.model_id / (name + ".cpl");
    fs::create_directories(config.out_dir / rel.parent_path());
    write_cpl(gather_rows(m.log(run.model_id, id_name), res.source_index), config.out_dir / rel);
    out.written.push_back(config.out_dir / rel);
    run.log_paths[name] = rel;
  }
  write_manifest(spec, config.out_dir / "manifest.json", out.provenance.substr(2));
  out.written.push_back(config.out_dir / "manifest.json");

  Csv ratios(out.provenance, "bin,id_ratio,target_ratio,count");
  for (std::uint32_t k = 0; k < partition.n_bins; ++k) {
    ratios.row({num(k), num(partition.ratios[k]), num(target[k]), num(res.target_counts[k])});
  }
  out.text(name + ".ratios.csv", ratios.text());
  return out.written;
}

}  // namespace

Artifacts cmd_gen(const PipelineConfig& config) {
  Output out = open_output(config, "gen");
  if (config.preset == "resample") return gen_resampled(config, out);

  DatasetBundle bundle;
  json echo;
  if (config.preset == "mixture") {
    SynthConfig sc = config.synth.value_or(mixture_preset(config.seed));
    sc.seed = config.seed;
    bundle = gen_mixture(sc);
    echo = {{"preset", "mixture"}, {"n_classes", sc.n_classes}, {"config", synth_config_to_json(sc)}};
  } else if (config.preset == "colored2") {
    bundle = gen_colored_two_class(config.corruption, config.color_corr, config.seed);
    echo = {{"preset", "colored2"},
            {"n_classes", 2},
            {"config", {{"corruption", config.corruption}, {"color_corr", config.color_corr}, {"seed", config.seed}}}};
  } else {
    config_error("unknown preset '" + config.preset + "' (mixture, colored2, resample)");
  }

  ManifestSpec fragment;
  auto add = [&](const SynthDataset& d, DatasetRole role) {
    write_dataset(d, config.out_dir, out.provenance);
    for (const char* ext : {".cft", ".labels.csv", ".tags.csv"}) out.written.push_back(config.out_dir / (d.name + ext));
    fragment.datasets.push_back({d.name, role, static_cast<std::uint32_t>(d.size()), d.name + ".labels.csv",
                                 d.name + ".tags.csv"});
  };
  add(bundle.train, DatasetRole::Train);
  add(bundle.id, DatasetRole::Id);
  for (const auto& o : bundle.ood) add(o, DatasetRole::Ood);
  write_manifest(fragment, config.out_dir / "datasets.json", out.provenance.substr(2));
  out.written.push_back(config.out_dir / "datasets.json");
  out.structured("synth_config.json", echo);
  return out.written;
}

Artifacts cmd_train(const PipelineConfig& config) {
  Output out = open_output(config, "train");
  const fs::path data_dir = config.data_dir.value_or(config.out_dir);
  const json echo = json::parse(read_file(data_dir / "synth_config.json"), nullptr, false);
  if (echo.is_discarded() || !echo.contains("n_classes")) {
    throw Error(ErrorCode::ParseError, "synth_config.json is missing or malformed in " + data_dir.string());
  }
  const auto n_classes = echo.at("n_classes").get<std::uint32_t>();
  const json frag_doc = json::parse(read_file(data_dir / "datasets.json"), nullptr, false);
  if (frag_doc.is_discarded()) throw Error(ErrorCode::SchemaError, "datasets.json is not valid JSON");
  ManifestSpec fragment = manifest_from_json(frag_doc);

  DatasetBundle bundle;
  bool have_train = false, have_id = false;
  for (const auto& d : fragment.datasets) {
    SynthDataset data = read_dataset(data_dir, d.name, n_classes);
    switch (d.role) {
      case DatasetRole::Train: bundle.train = std::move(data); have_train = true; break;
      case DatasetRole::Id: bundle.id = std::move(data); have_id = true; break;
      case DatasetRole::Ood: bundle.ood.push_back(std::move(data)); break;
    }
  }
  if (!have_train || !have_id) throw Error(ErrorCode::SchemaError, "datasets.json needs a train and an id dataset");

  std::vector<ToyArch> archs;
  for (const auto& hidden : config.archs) archs.push_back({hidden, bundle.train.n_features, n_classes});
  if (archs.empty() || config.replicas == 0) config_error("need at least one architecture and one replica");
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  const auto runs = train_ensemble(bundle, archs, config.replicas, tc);

  ManifestSpec spec = write_runs(runs, config.out_dir, out.provenance);
  for (const auto& r : spec.runs) {
    for (const auto& [name, path] : r.log_paths) out.written.push_back(config.out_dir / path);
    out.written.push_back(config.out_dir / *r.metrics_path);
  }
  spec.datasets = rebase_spec(fragment, data_dir, config.out_dir).datasets;
  write_manifest(spec, config.out_dir / "manifest.json", out.provenance.substr(2));
  out.written.push_back(config.out_dir / "manifest.json");
  return out.written;
}

Artifacts cmd_score(const PipelineConfig& config) {
  Output out = open_output(config, "score");
  const Manifest m = load(config);
  Csv summary(out.provenance, "dataset,n_samples,window_first,window_last,mean_confusion");
  json doc = {{"datasets", json::object()}};
  for (const auto& d : m.spec.datasets) {
    if (!scored(m, d.name)) continue;
    const auto view = scoring_view(m, d.name);
    const ScoreTable table = score_table(view, d.name, config.window, config.tail_start);
    if (config.epoch) view.check_epoch(*config.epoch);
    summary.row({d.name, num(view.n_samples()), num(table.window.first), num(table.window.last),
                 num(table.mean_confusion())});
    if (config.format == OutputFormat::Csv) {
      std::string header = "sample_index,confusion,entropy_std";
      if (config.epoch) header += ",s_" + std::to_string(*config.epoch);
      Csv csv(out.provenance, header);
      for (std::size_t i = 0; i < view.n_samples(); ++i) {
        const std::string std_text = table.entropy_std.empty() ? std::string() : num(table.entropy_std[i]);
        if (config.epoch) {
          csv.row({num(i), num(table.confusion[i]), std_text, num(table.entropy_at(i, *config.epoch))});
        } else {
          csv.row({num(i), num(table.confusion[i]), std_text});
        }
      }
      out.text("scores_" + d.name + ".csv", csv.text());
    } else {
      json entry = {{"window", {table.window.first, table.window.last}},
                    {"mean_confusion", table.mean_confusion()},
                    {"confusion", table.confusion},
                    {"tail_start", table.tail_start},
                    {"entropy_std", table.entropy_std}};
      if (config.epoch) {
        std::vector<double> st;
        for (std::size_t i = 0; i < view.n_samples(); ++i) st.push_back(table.entropy_at(i, *config.epoch));
        entry["epoch"] = *config.epoch;
        entry["entropy_at_epoch"] = st;
      }
      doc["datasets"][d.name] = entry;
    }
  }
  out.text("scores_summary.csv", summary.text());
  if (config.format == OutputFormat::Structured) out.structured("scores.json", doc);
  return out.written;
}

Artifacts cmd_partition(const PipelineConfig& config) {
  Output out = open_output(config, "partition");
  const Manifest m = load(config);
  json doc = {{"n_bins", config.n_bins}, {"datasets", json::object()}};
  for (const auto& name : eval_datasets(m)) {
    const auto view = scoring_view(m, name);
    const auto part = bin_scores(partition_scores(config, view), config.n_bins, m.n_classes);
    const EpochWindow window =
        config.epoch ? EpochWindow{*config.epoch, *config.epoch} : config.window.value_or(view.full_window());
    json entry = {{"window", {window.first, window.last}}, {"assignment", part.assignment}, {"counts", part.counts},
                  {"ratios", part.ratios}};

    if (config.format == OutputFormat::Csv) {
      Csv csv(out.provenance, "sample_index,bin");
      for (std::size_t i = 0; i < part.n_samples(); ++i) csv.row({num(i), num(part.assignment[i])});
      out.text("partition_" + name + ".csv", csv.text());
    }
    if (const LabelVec* labels = m.labels(name)) {
      const auto profile = per_bin_accuracy(part, view, *labels, window);
      Csv csv(out.provenance, "bin,lo,hi,count,ratio,mean_acc,ens_acc,gain");
      json bins = json::array();
      for (std::uint32_t k = 0; k < part.n_bins; ++k) {
        const BinStats& b = profile.bins[k];
        csv.row({num(k), num(part.edges[k]), num(part.edges[k + 1]), num(b.count), num(part.ratios[k]),
                 opt(b.mean_accuracy), opt(b.ensemble_accuracy), opt(b.ensembling_gain)});
        bins.push_back({{"bin", k},
                        {"count", b.count},
                        {"mean_acc", opt_json(b.mean_accuracy)},
                        {"ens_acc", opt_json(b.ensemble_accuracy)},
                        {"gain", opt_json(b.ensembling_gain)}});
      }
      const auto split = correct_count_split(view, *labels, std::nullopt, threshold(config, false), threshold(config, true));
      const auto acc = subpop_accuracy(split, view, *labels, split.epoch);
      Csv groups(out.provenance, "group,count,ratio,mean_run_accuracy,ensemble_accuracy,lo,hi,epoch");
      json groups_json = json::array();
      for (const auto& g : acc.groups) {
        groups.row({std::string(subpop_name(g.group)), num(g.count), num(g.ratio), opt(g.mean_run_accuracy),
                    opt(g.ensemble_accuracy), num(acc.lo), num(acc.hi), num(split.epoch)});
        groups_json.push_back({{"group", subpop_name(g.group)},
                               {"count", g.count},
                               {"ratio", g.ratio},
                               {"mean_run_accuracy", opt_json(g.mean_run_accuracy)},
                               {"ensemble_accuracy", opt_json(g.ensemble_accuracy)}});
      }
      if (config.format == OutputFormat::Csv) {
        out.text("profile_" + name + ".csv", csv.text());
        out.text("subpops_" + name + ".csv", groups.text());
      }
      entry["profile"] = bins;
      entry["subpops"] = {{"lo", acc.lo}, {"hi", acc.hi}, {"epoch", split.epoch}, {"groups", groups_json}};
    }
    doc["datasets"][name] = entry;
  }
  if (config.format == OutputFormat::Structured) out.structured("partition.json", doc);
  return out.written;
}

Artifacts cmd_predict(const PipelineConfig& config) {
  Output out = open_output(config, "predict");
  const Manifest m = load(config);
  PredictionConfig pc;
  pc.n_bins = config.n_bins;
  pc.window = config.window;
  pc.partition_epoch = config.epoch;
  const PredictionReport report = prediction_report(m, pc);

  if (config.format == OutputFormat::Csv) {
    Csv csv(out.provenance, "model_id,ood,predicted,actual,residual,fallback_bins");
    for (const auto& r : report.rows) {
      csv.row({r.model_id, r.ood_dataset, num(r.predicted_accuracy), opt(r.actual_accuracy), opt(r.residual),
               num(r.fallback_bins_used)});
    }
    out.text("predictions.csv", csv.text());
    Csv mc(out.provenance, "dataset,mean_confusion");
    for (const auto& [name, value] : report.mean_confusion) mc.row({name, num(value)});
    out.text("mean_confusion.csv", mc.text());
  } else {
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"model_id", r.model_id},
                      {"ood", r.ood_dataset},
                      {"predicted", r.predicted_accuracy},
                      {"actual", opt_json(r.actual_accuracy)},
                      {"residual", opt_json(r.residual)},
                      {"fallback_bins", r.fallback_bins_used},
                      {"window", {r.window.first, r.window.last}}});
    }
    out.structured("predictions.json", {{"n_bins", config.n_bins},
                                        {"id_dataset", report.id_dataset},
                                        {"partition_epoch", config.epoch ? json(*config.epoch) : json(nullptr)},
                                        {"mean_confusion", report.mean_confusion},
                                        {"rows", rows}});
  }
  return out.written;
}

Artifacts cmd_phases(const PipelineConfig& config) {
  Output out = open_output(config, "phases");
  const Manifest m = load(config);
  const auto trains = m.datasets_with_role(DatasetRole::Train);
  if (trains.empty()) throw Error(ErrorCode::UnknownDataset, "phase detection needs a train dataset in the manifest");
  const std::string train_name = trains.front()->name;
  const auto tests = eval_datasets(m);

  Csv phases(out.provenance, "model_id,t1,t2");
  json rows = json::array();
  for (const auto& id : m.model_ids()) {
    const MetricsSeries* metrics = m.metrics(id);
    if (metrics == nullptr) continue;
    const auto r = detect_phases(*metrics, train_name, m.id_dataset().name, tests);
    phases.row({id, opt(r.t1), opt(r.t2)});
    rows.push_back({{"model_id", id},
                    {"t1", r.t1 ? json(*r.t1) : json(nullptr)},
                    {"t2", r.t2 ? json(*r.t2) : json(nullptr)},
                    {"window", r.window},
                    {"delta", r.delta}});
  }

  Csv traj(out.provenance, "epoch,dataset,mean_entropy");
  json traj_json = json::object();
  for (const auto& d : m.spec.datasets) {
    if (!scored(m, d.name)) continue;
    const auto series = mean_entropy_trajectory(scoring_view(m, d.name));
    for (std::size_t t = 0; t < series.size(); ++t) traj.row({num(t + 1), d.name, num(series[t])});
    traj_json[d.name] = series;
  }
  if (config.format == OutputFormat::Csv) {
    out.text("phases.csv", phases.text());
    out.text("entropy_trajectory.csv", traj.text());
  } else {
    out.structured("phases.json", {{"phases", rows}, {"mean_entropy", traj_json}});
  }
  return out.written;
}

Artifacts cmd_fit(const PipelineConfig& config) {
  Output out = open_output(config, "fit");
  const Manifest m = load(config);
  const std::string id_name = m.id_dataset().name;
  const auto view = scoring_view(m, id_name);
  const auto part = bin_scores(partition_scores(config, view), config.n_bins, m.n_classes);
  const LabelVec& id_labels = *m.labels(id_name);

  std::vector<double> centers(part.n_bins);
  for (std::uint32_t k = 0; k < part.n_bins; ++k) centers[k] = part.center(k);

  Csv group(out.provenance, "model_id,alpha,rss");
  json group_json = json::array();
  for (const auto& id : m.model_ids()) {
    const ProbLog& log = m.log(id, id_name);
    const auto accs = per_bin_prediction_accuracy(part, argmax_predict(log, log.n_epochs), id_labels);
    std::vector<double> acc(part.n_bins, 0.0), weights(part.n_bins, 0.0);
    for (std::uint32_t k = 0; k < part.n_bins; ++k) {
      if (!accs[k]) continue;
      acc[k] = *accs[k];
      weights[k] = static_cast<double>(part.counts[k]);
    }
    const auto fit = fit_group_model(centers, acc, weights, m.n_classes);
    group.row({id, num(fit.alpha), num(fit.fit_rss)});
    group_json.push_back({{"model_id", id}, {"alpha", fit.alpha}, {"rss", fit.fit_rss}});
  }

  // Complexity index within each family that has at least two sizes.
  std::map<std::string, std::vector<const RunEntry*>> families;
  for (const auto& r : m.spec.runs) families[r.family].push_back(&r);
  std::map<std::string, double> alpha_of;
  Csv complexity(out.provenance, "model_id,family,param_count,alpha");
  for (auto& [family, members] : families) {
    std::vector<std::uint64_t> counts;
    for (const auto* r : members) counts.push_back(r->param_count);
    if (std::set<std::uint64_t>(counts.begin(), counts.end()).size() < 2) continue;
    const auto alpha = complexity_index(counts);
    for (std::size_t i = 0; i < members.size(); ++i) alpha_of[members[i]->model_id] = alpha[i];
  }
  for (const auto& [id, a] : alpha_of) complexity.row({id, m.run(id).family, num(m.run(id).param_count), num(a)});

  json collinearity_json = nullptr;
  std::optional<Csv> coll_csv, shared_csv;
  std::set<double> distinct_alpha;
  for (const auto& [id, a] : alpha_of) distinct_alpha.insert(a);
  std::vector<CollinearityInput> inputs;
  if (distinct_alpha.size() >= 2) {
    for (const auto& name : eval_datasets(m)) {
      const LabelVec* labels = m.labels(name);
      if (labels == nullptr) continue;
      const auto v = scoring_view(m, name);
      const auto split = correct_count_split(v, *labels, std::nullopt, threshold(config, false), threshold(config, true));
      CollinearityInput in;
      in.dataset = name;
      in.ratios = split.ratios;
      for (const auto& [id, a] : alpha_of) {
        const ProbLog& log = m.log(id, name);
        const auto pred = argmax_predict(log, log.n_epochs);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == (*labels)[i] ? 1 : 0;
        in.alphas.push_back(a);
        in.accuracies.push_back(static_cast<double>(correct) / static_cast<double>(pred.size()));
      }
      inputs.push_back(std::move(in));
    }
  }
  if (inputs.size() >= 2) {
    const auto fit = fit_collinearity(inputs, m.n_classes);
    coll_csv.emplace(out.provenance,
                     "dataset,ratio_easy,ratio_medium,ratio_hard,minacc,slope,line_r2,minacc_residual,slope_residual");
    json per = json::array();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto& r = inputs[i].ratios;
      coll_csv->row({fit.datasets[i], num(r[0]), num(r[1]), num(r[2]), num(fit.minacc[i]), num(fit.slope[i]),
                     num(fit.line_r2[i]), num(fit.minacc_residual[i]), num(fit.slope_residual[i])});
      per.push_back({{"dataset", fit.datasets[i]},
                     {"ratios", r},
                     {"minacc", fit.minacc[i]},
                     {"slope", fit.slope[i]},
                     {"line_r2", fit.line_r2[i]},
                     {"minacc_residual", fit.minacc_residual[i]},
                     {"slope_residual", fit.slope_residual[i]}});
    }
    shared_csv.emplace(out.provenance, "parameter,value");
    shared_csv->row({"minacc_easy", opt(fit.minacc_easy)});
    shared_csv->row({"minacc_med", opt(fit.minacc_med)});
    shared_csv->row({"s_easy", opt(fit.s_easy)});
    shared_csv->row({"s_med", opt(fit.s_med)});
    shared_csv->row({"chance", num(fit.chance)});
    collinearity_json = {{"datasets", per},
                         {"minacc_easy", opt_json(fit.minacc_easy)},
                         {"minacc_med", opt_json(fit.minacc_med)},
                         {"s_easy", opt_json(fit.s_easy)},
                         {"s_med", opt_json(fit.s_med)},
                         {"chance", fit.chance}};
  }

  if (config.format == OutputFormat::Csv) {
    out.text("fit_group.csv", group.text());
    out.text("complexity.csv", complexity.text());
    if (coll_csv) {
      out.text("fit_collinearity.csv", coll_csv->text());
      out.text("fit_shared.csv", shared_csv->text());
    }
  } else {
    out.structured("fit.json", {{"group", group_json}, {"complexity", alpha_of}, {"collinearity", collinearity_json}});
  }
  return out.written;
}

Artifacts cmd_extremes(const PipelineConfig& config) {
  Output out = open_output(config, "extremes");
  const Manifest m = load(config);
  const std::string dataset = config.dataset.value_or(m.id_dataset().name);
  const auto rows = list_extremes(m, dataset, config.k, config.which, config.mistakes_only, config.window);
  const std::string stem = "extremes_" + dataset + "_" + config.which;
  if (config.format == OutputFormat::Csv) {
    Csv csv(out.provenance, "rank,sample_index,confusion,label,prediction,tags");
    for (const auto& r : rows) {
      csv.row({num(r.rank), num(r.sample_index), num(r.confusion), r.label ? std::to_string(*r.label) : "",
               num(r.prediction), r.tags});
    }
    out.text(stem + ".csv", csv.text());
  } else {
    json arr = json::array();
    for (const auto& r : rows) {
      arr.push_back({{"rank", r.rank},
                     {"sample_index", r.sample_index},
                     {"confusion", r.confusion},
                     {"label", r.label ? json(*r.label) : json(nullptr)},
                     {"prediction", r.prediction},
                     {"tags", r.tags}});
    }
    out.structured(stem + ".json", {{"dataset", dataset}, {"which", config.which},
                                    {"mistakes_only", config.mistakes_only}, {"rows", arr}});
  }
  return out.written;
}

Artifacts cmd_report(const PipelineConfig& config) {
  Output out = open_output(config, "report");
  const std::vector<std::string> fixed = {"scores_summary.csv", "mean_confusion.csv", "predictions.csv",
                                          "phases.csv",         "fit_group.csv",      "complexity.csv",
                                          "fit_collinearity.csv", "fit_shared.csv"};
  std::vector<std::string> names;
  for (const auto& f : fixed) {
    if (fs::is_regular_file(config.out_dir / f)) names.push_back(f);
  }
  for (const char* prefix : {"profile_", "subpops_", "extremes_"}) {
    std::vector<std::string> found;
    for (const auto& entry : fs::directory_iterator(config.out_dir)) {
      const std::string file = entry.path().filename().string();
      if (file.rfind(prefix, 0) == 0 && entry.path().extension() == ".csv") found.push_back(file);
    }
    std::sort(found.begin(), found.end());
    names.insert(names.end(), found.begin(), found.end());
  }
  if (names.empty()) throw Error(ErrorCode::MissingFile, "no artifacts to report in " + config.out_dir.string());

  std::string text = out.provenance + "\n";
  json sections = json::object();
  for (const auto& name : names) {
    const auto lines = data_lines(read_file(config.out_dir / name));
    text += "\n[" + name + "]\n";
    json rows = json::array();
    for (const auto& line : lines) {
      text += line + "\n";
      rows.push_back(split(line, ','));
    }
    sections[name] = rows;
  }
  if (config.format == OutputFormat::Csv) {
    out.text("report.txt", text);
  } else {
    out.structured("report.json", {{"sections", sections}});
  }
  return out.written;
}

}  // namespace clens
