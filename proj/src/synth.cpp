#include "clens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clens/error.hpp"
#include "clens/io.hpp"
#include "clens/manifest.hpp"
#include "clens/partition.hpp"
#include "clens/rng.hpp"

namespace clens {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

bool is_rate(double r) { return r >= 0.0 && r < 1.0; }
bool is_strength(double s) { return s >= 0.0 && s <= 1.0; }

}  // namespace

void SynthConfig::validate() const {
  if (n_classes < 2) invalid("n_classes must be at least 2");
  if (core_dims < 1) invalid("core_dims must be at least 1");
  if (!(separation >= 0.0) || !(nuisance_scale >= 0.0)) invalid("separation and nuisance_scale must be >= 0");
  if (!is_rate(ambiguous_rate) || !is_rate(corruption_rate)) invalid("rates must lie in [0, 1)");
  if (!is_strength(ambiguous_shrink)) invalid("ambiguous_shrink must lie in [0, 1]");
  if (n_train < 1 || n_id < 1) invalid("dataset sizes must be at least 1");
  for (const auto& r : class_specific) {
    if (r.source >= n_classes || r.target >= n_classes || r.source == r.target) {
      invalid("class-specific rule needs two distinct classes below C");
    }
    if (!is_strength(r.strength)) invalid("spurious strength must lie in [0, 1]");
    if (nuisance_dims == 0) invalid("spurious rules need nuisance dimensions");
  }
  for (const auto& r : weak) {
    if (r.dim >= nuisance_dims) invalid("weak spurious dim outside the nuisance block");
    if (r.classes.empty()) invalid("weak spurious rule needs a class set");
    for (auto c : r.classes) {
      if (c >= n_classes) invalid("weak spurious class out of range");
    }
    if (!is_strength(r.strength)) invalid("spurious strength must lie in [0, 1]");
  }
  std::vector<std::string> names{"train", "id"};
  for (const auto& o : ood) {
    if (o.n_samples < 1) invalid("dataset sizes must be at least 1");
    if (!is_rate(o.ambiguous_rate)) invalid("rates must lie in [0, 1)");
    if (!(o.class_specific_scale >= 0.0) || !(o.weak_scale >= 0.0)) invalid("OOD scales must be >= 0");
    if (o.name.empty() || std::find(names.begin(), names.end(), o.name) != names.end()) {
      invalid("OOD split name '" + o.name + "' is empty or repeated");
    }
    names.push_back(o.name);
  }
}

json synth_config_to_json(const SynthConfig& c) {
  json doc = {{"n_classes", c.n_classes},           {"core_dims", c.core_dims},
              {"nuisance_dims", c.nuisance_dims},   {"separation", c.separation},
              {"nuisance_scale", c.nuisance_scale}, {"ambiguous_rate", c.ambiguous_rate},
              {"ambiguous_shrink", c.ambiguous_shrink}, {"corruption_rate", c.corruption_rate},
              {"n_train", c.n_train},               {"n_id", c.n_id},
              {"seed", c.seed}};
  doc["class_specific"] = json::array();
  for (const auto& r : c.class_specific) {
    doc["class_specific"].push_back({{"source", r.source}, {"target", r.target}, {"strength", r.strength}});
  }
  doc["weak"] = json::array();
  for (const auto& r : c.weak) {
    doc["weak"].push_back({{"dim", r.dim}, {"classes", r.classes}, {"strength", r.strength}});
  }
  doc["ood"] = json::array();
  for (const auto& o : c.ood) {
    doc["ood"].push_back({{"name", o.name},
                          {"n_samples", o.n_samples},
                          {"ambiguous_rate", o.ambiguous_rate},
                          {"class_specific_scale", o.class_specific_scale},
                          {"weak_scale", o.weak_scale}});
  }
  return doc;
}

SynthConfig synth_config_from_json(const json& doc) {
  SynthConfig c;
  try {
    if (!doc.is_object()) invalid("synth config must be a JSON object");
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("n_classes", c.n_classes);
    get("core_dims", c.core_dims);
    get("nuisance_dims", c.nuisance_dims);
    get("separation", c.separation);
    get("nuisance_scale", c.nuisance_scale);
    get("ambiguous_rate", c.ambiguous_rate);
    get("ambiguous_shrink", c.ambiguous_shrink);
    get("corruption_rate", c.corruption_rate);
    get("n_train", c.n_train);
    get("n_id", c.n_id);
    get("seed", c.seed);
    for (const auto& r : doc.value("class_specific", json::array())) {
      c.class_specific.push_back({r.at("source").get<std::uint32_t>(), r.at("target").get<std::uint32_t>(),
                                  r.at("strength").get<double>()});
    }
    for (const auto& r : doc.value("weak", json::array())) {
      c.weak.push_back({r.at("dim").get<std::uint32_t>(), r.at("classes").get<std::vector<std::uint32_t>>(),
                        r.at("strength").get<double>()});
    }
    for (const auto& o : doc.value("ood", json::array())) {
      OodSpec spec;
      spec.name = o.at("name").get<std::string>();
      spec.n_samples = o.value("n_samples", spec.n_samples);
      spec.ambiguous_rate = o.value("ambiguous_rate", spec.ambiguous_rate);
      spec.class_specific_scale = o.value("class_specific_scale", spec.class_specific_scale);
      spec.weak_scale = o.value("weak_scale", spec.weak_scale);
      c.ood.push_back(spec);
    }
  } catch (const json::exception& e) {
    invalid(std::string("bad synth config: ") + e.what());
  }
  c.validate();
  return c;
}

SynthConfig mixture_preset(std::uint64_t seed) {
  SynthConfig c;
  c.n_classes = 10;
  c.core_dims = 8;
  c.nuisance_dims = 8;
  c.separation = 2.5;
  c.nuisance_scale = 2.0;
  c.ambiguous_rate = 0.2;
  c.corruption_rate = 0.1;
  c.class_specific = {{0, 1, 0.3}, {2, 3, 0.3}};
  c.weak = {{0, {4, 5, 6}, 0.5}};
  c.n_train = 4000;
  c.n_id = 4000;
  c.ood = {{"ood_shifted", 4000, 0.4, 2.0, 1.0}, {"ood_clean", 4000, 0.05, 0.0, 0.0}};
  c.seed = seed;
  return c;
}

namespace {

std::vector<double> random_direction(Xoshiro256pp& rng, std::uint32_t dims, double length) {
  std::vector<double> v(dims);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x = norm > 0.0 ? x * length / norm : 0.0;
  return v;
}

struct Geometry {
  std::vector<std::vector<double>> class_means;
  std::vector<std::vector<double>> signatures;  // per class, nuisance block
};

Geometry make_geometry(const SynthConfig& c) {
  Xoshiro256pp rng(derive_seed(c.seed, "geometry"));
  Geometry g;
  for (std::uint32_t k = 0; k < c.n_classes; ++k) g.class_means.push_back(random_direction(rng, c.core_dims, c.separation));
  for (std::uint32_t k = 0; k < c.n_classes; ++k) {
    g.signatures.push_back(random_direction(rng, c.nuisance_dims, c.nuisance_scale));
  }
  return g;
}

struct SplitParams {
  std::string name;
  std::uint32_t n = 0;
  double ambiguous_rate = 0.0;
  double cs_scale = 1.0;
  double weak_scale = 1.0;
  double corruption_rate = 0.0;
};

std::string join_tags(const std::vector<std::string>& tags) {
  if (tags.empty()) return "clean";
  std::string out;
  for (const auto& t : tags) {
    if (!out.empty()) out += ';';
    out += t;
  }
  return out;
}

// Every decision draws its variates whether or not it fires, so one change in
// a rate never shifts the rest of the stream.
SynthDataset generate_split(const SynthConfig& c, const Geometry& g, const SplitParams& p) {
  Xoshiro256pp rng(derive_seed(c.seed, "dataset/" + p.name));
  SynthDataset d;
  d.name = p.name;
  d.n_classes = c.n_classes;
  d.n_features = c.core_dims + c.nuisance_dims;
  d.features.reserve(static_cast<std::size_t>(p.n) * d.n_features);
  for (std::uint32_t i = 0; i < p.n; ++i) {
    std::vector<std::string> tags;
    const auto y = static_cast<std::uint32_t>(rng.below(c.n_classes));
    const bool ambiguous = rng.uniform() < p.ambiguous_rate;
    if (ambiguous) tags.push_back("ambiguous");
    const double shrink = ambiguous ? c.ambiguous_shrink : 1.0;
    for (std::uint32_t j = 0; j < c.core_dims; ++j) {
      d.features.push_back(static_cast<float>(shrink * g.class_means[y][j] + rng.normal()));
    }

    std::uint32_t signature = y;
    for (const auto& r : c.class_specific) {
      const double u = rng.uniform();
      if (r.source == y && u < std::min(1.0, r.strength * p.cs_scale)) {
        signature = r.target;
      }
    }
    if (signature != y) tags.push_back("class_specific_sp(" + std::to_string(y) + "->" + std::to_string(signature) + ")");
    std::vector<double> nuisance(c.nuisance_dims);
    for (std::uint32_t j = 0; j < c.nuisance_dims; ++j) nuisance[j] = g.signatures[signature][j] + rng.normal();
    for (const auto& r : c.weak) {
      const double u = rng.uniform();
      const bool member = std::find(r.classes.begin(), r.classes.end(), y) != r.classes.end();
      if (member && u < std::min(1.0, r.strength * p.weak_scale)) {
        nuisance[r.dim] += c.nuisance_scale;
        tags.push_back("weak_sp(" + std::to_string(r.dim) + ")");
      }
    }
    for (double v : nuisance) d.features.push_back(static_cast<float>(v));

    const double u = rng.uniform();
    const auto other = static_cast<std::uint32_t>(rng.below(c.n_classes - 1));
    std::uint32_t label = y;
    if (u < p.corruption_rate) {
      label = other >= y ? other + 1 : other;
      tags.push_back("corrupted");
    }
    d.latent.push_back(y);
    d.labels.push_back(label);
    d.tags.push_back(join_tags(tags));
  }
  return d;
}

}  // namespace

DatasetBundle gen_mixture(const SynthConfig& config) {
  config.validate();
  const Geometry g = make_geometry(config);
  DatasetBundle b;
  b.train = generate_split(config, g, {"train", config.n_train, config.ambiguous_rate, 1.0, 1.0, config.corruption_rate});
  b.id = generate_split(config, g, {"id", config.n_id, config.ambiguous_rate, 1.0, 1.0, 0.0});
  for (const auto& o : config.ood) {
    b.ood.push_back(generate_split(config, g, {o.name, o.n_samples, o.ambiguous_rate, o.class_specific_scale,
                                               o.weak_scale, 0.0}));
  }
  return b;
}

std::vector<std::size_t> largest_remainder(std::span<const double> ratios, std::size_t total) {
  std::vector<std::size_t> counts(ratios.size());
  std::vector<double> frac(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    const double exact = ratios[k] * static_cast<double>(total);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    frac[k] = exact - std::floor(exact);
    assigned += counts[k];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; assigned < total && r < order.size(); ++r, ++assigned) ++counts[order[r]];
  return counts;
}

ResampleResult resample_by_bins(const SynthDataset& id, std::span<const double> scores,
                                std::span<const double> target_ratios, std::size_t n_out, std::uint64_t seed,
                                const std::string& name) {
  if (scores.size() != id.size()) throw Error(ErrorCode::LengthMismatch, "scores do not match the dataset");
  double sum = 0.0;
  for (double r : target_ratios) {
    if (!(r >= 0.0)) throw Error(ErrorCode::RatiosNotNormalized, "negative target ratio");
    sum += r;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw Error(ErrorCode::RatiosNotNormalized, "target ratios do not sum to 1");
  const auto partition = bin_scores(scores, static_cast<std::uint32_t>(target_ratios.size()), id.n_classes);

  std::vector<std::vector<std::size_t>> members(partition.n_bins);
  for (std::size_t i = 0; i < id.size(); ++i) members[partition.assignment[i]].push_back(i);

  ResampleResult out;
  out.target_counts = largest_remainder(target_ratios, n_out);
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (out.target_counts[k] > 0 && members[k].empty()) {
      throw Error(ErrorCode::EmptySourceBin, "bin " + std::to_string(k) + " is targeted but empty in the source");
    }
  }
  Xoshiro256pp rng(derive_seed(seed, "resample/" + name));
  for (std::size_t k = 0; k < members.size(); ++k) {
    for (std::size_t j = 0; j < out.target_counts[k]; ++j) {
      out.source_index.push_back(members[k][rng.below(members[k].size())]);
    }
  }

  SynthDataset& d = out.dataset;
  d.name = name;
  d.n_classes = id.n_classes;
  d.n_features = id.n_features;
  d.features.reserve(out.source_index.size() * id.n_features);
  for (std::size_t src : out.source_index) {
    const auto r = id.row(src);
    d.features.insert(d.features.end(), r.begin(), r.end());
    d.labels.push_back(id.labels[src]);
    d.latent.push_back(id.latent[src]);
    d.tags.push_back(id.tags[src]);
  }
  return out;
}

ProbLog gather_rows(const ProbLog& log, std::span<const std::size_t> index) {
  ProbLog out;
  out.model_id = log.model_id;
  out.n_epochs = log.n_epochs;
  out.n_samples = static_cast<std::uint32_t>(index.size());
  out.n_classes = log.n_classes;
  out.probs.reserve(out.value_count());
  for (std::uint32_t t = 1; t <= log.n_epochs; ++t) {
    for (std::size_t i : index) {
      if (i >= log.n_samples) throw Error(ErrorCode::ShapeMismatch, "gather index out of range");
      const auto r = log.row(t, i);
      out.probs.insert(out.probs.end(), r.begin(), r.end());
    }
  }
  return out;
}

namespace {

enum class Color { Mixed, Green, Red };

SynthDataset colored_split(const std::string& name, std::uint32_t n, double corruption, double color_corr,
                           Color forced, std::uint64_t seed, const std::vector<double>& axis) {
  constexpr double kColorScale = 2.0;
  constexpr double kColorNoise = 0.5;
  Xoshiro256pp rng(derive_seed(seed, "colored/" + name));
  SynthDataset d;
  d.name = name;
  d.n_classes = 2;
  d.n_features = static_cast<std::uint32_t>(axis.size()) + 2;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<std::string> tags;
    const auto y = static_cast<std::uint32_t>(rng.below(2));
    const double sign = y == 0 ? -1.0 : 1.0;
    for (double a : axis) d.features.push_back(static_cast<float>(sign * a + rng.normal()));

    // class 0 is "mostly red", class 1 "mostly green"
    const bool usual = rng.uniform() < color_corr;
    bool red = (y == 0) == usual;
    if (forced == Color::Green) red = false;
    if (forced == Color::Red) red = true;
    if (red != (y == 0)) tags.push_back("class_specific_sp(" + std::to_string(y) + "->" + std::to_string(1 - y) + ")");
    d.features.push_back(static_cast<float>((red ? kColorScale : 0.0) + kColorNoise * rng.normal()));
    d.features.push_back(static_cast<float>((red ? 0.0 : kColorScale) + kColorNoise * rng.normal()));

    const bool flip = rng.uniform() < corruption;
    if (flip) tags.push_back("corrupted");
    d.latent.push_back(y);
    d.labels.push_back(flip ? 1 - y : y);
    d.tags.push_back(join_tags(tags));
  }
  return d;
}

}  // namespace

DatasetBundle gen_colored_two_class(double corruption, double color_corr, std::uint64_t seed,
                                    std::uint32_t n_train, std::uint32_t n_eval) {
  if (!is_strength(corruption) || !is_strength(color_corr)) invalid("corruption and color_corr must lie in [0, 1]");
  if (n_train < 1 || n_eval < 1) invalid("dataset sizes must be at least 1");
  Xoshiro256pp geo(derive_seed(seed, "colored/geometry"));
  // Core class means at +-axis. |axis| = 0.75 leaves the core alone ~77%
  // separable, well below the color block, so color is the easier cue.
  const auto axis = random_direction(geo, 4, 0.75);
  DatasetBundle b;
  b.train = colored_split("train", n_train, corruption, color_corr, Color::Mixed, seed, axis);
  b.id = colored_split("id", n_eval, 0.0, color_corr, Color::Mixed, seed, axis);
  b.ood.push_back(colored_split("ood_all_green", n_eval, 0.0, color_corr, Color::Green, seed, axis));
  b.ood.push_back(colored_split("ood_all_red", n_eval, 0.0, color_corr, Color::Red, seed, axis));
  return b;
}

namespace {
constexpr std::string_view kFeatureMagic = "CFT1";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kFeatureHeader = 4 + 4 + 4 + 4 + 2;
}  // namespace

std::string encode_features(const SynthDataset& data) {
  if (data.features.size() != data.size() * data.n_features) {
    throw Error(ErrorCode::ShapeMismatch, "feature tensor does not match N x D");
  }
  if (data.name.size() > 0xffff) throw Error(ErrorCode::ShapeMismatch, "dataset name too long");
  std::string out;
  out.reserve(kFeatureHeader + data.name.size() + data.features.size() * 4);
  out += kFeatureMagic;
  le::put_u32(out, kFeatureVersion);
  le::put_u32(out, static_cast<std::uint32_t>(data.size()));
  le::put_u32(out, data.n_features);
  le::put_u16(out, static_cast<std::uint16_t>(data.name.size()));
  out += data.name;
  for (float v : data.features) le::put_f32(out, v);
  return out;
}

SynthDataset decode_features(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != kFeatureMagic) throw Error(ErrorCode::BadMagic, "not a CFT file");
  if (bytes.size() < kFeatureHeader) throw Error(ErrorCode::TruncatedFile, "header truncated");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (le::get_u32(p + 4) != kFeatureVersion) throw Error(ErrorCode::UnsupportedVersion, "unsupported CFT version");
  const std::uint32_t n = le::get_u32(p + 8);
  const std::uint32_t dims = le::get_u32(p + 12);
  const std::uint16_t name_len = le::get_u16(p + 16);
  if (bytes.size() < kFeatureHeader + name_len) throw Error(ErrorCode::TruncatedFile, "name truncated");
  SynthDataset d;
  d.name = std::string(bytes.substr(kFeatureHeader, name_len));
  d.n_features = dims;
  const std::size_t count = static_cast<std::size_t>(n) * dims;
  const std::size_t payload = bytes.size() - kFeatureHeader - name_len;
  if (payload < count * 4) throw Error(ErrorCode::TruncatedFile, "feature payload truncated");
  if (payload != count * 4) throw Error(ErrorCode::TrailingData, "bytes after the feature payload");
  d.features.resize(count);
  const unsigned char* q = p + kFeatureHeader + name_len;
  for (std::size_t k = 0; k < count; ++k) d.features[k] = le::get_f32(q + 4 * k);
  d.labels.resize(n);
  return d;
}

void write_dataset(const SynthDataset& data, const std::filesystem::path& dir, const std::string& header_line) {
  const std::string prefix = header_line.empty() ? std::string() : header_line + "\n";
  write_file_atomic(dir / (data.name + ".cft"), encode_features(data));
  write_file_atomic(dir / (data.name + ".labels.csv"), prefix + format_labels(data.labels));
  write_file_atomic(dir / (data.name + ".tags.csv"), prefix + format_tags(data.tags));
}

SynthDataset read_dataset(const std::filesystem::path& dir, const std::string& name, std::uint32_t n_classes) {
  SynthDataset d = decode_features(read_file(dir / (name + ".cft")));
  d.n_classes = n_classes;
  d.labels = read_labels(dir / (name + ".labels.csv"), d.labels.size(), n_classes);
  // Latent classes are not stored; corrupted samples are flagged by their tags.
  d.latent = d.labels;
  const auto tags_path = dir / (name + ".tags.csv");
  if (std::filesystem::exists(tags_path)) {
    d.tags = parse_tags(read_file(tags_path), d.labels.size());
  } else {
    d.tags.assign(d.labels.size(), "");
  }
  return d;
}

}  // namespace clens
