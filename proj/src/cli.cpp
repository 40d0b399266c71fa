#include "clens/cli.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "clens/error.hpp"
#include "clens/io.hpp"
#include "clens/pipeline.hpp"

namespace clens {

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitConfig = 4;

int exit_code(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::Validation: return kExitValidation;
    case ErrorCategory::Io: return kExitIo;
    case ErrorCategory::Config: return kExitConfig;
  }
  return kExitValidation;
}

struct Flags {
  std::string config_file;
  std::string out = ".";
  std::string manifest;
  std::string data_dir;
  std::uint64_t seed = 0;
  std::uint32_t bins = 0;
  std::string window;
  std::uint32_t epoch = 0;
  std::string thresholds;
  std::uint32_t tail_start = 0;
  std::uint32_t k = 0;
  bool mistakes_only = false;
  std::string format = "csv";
  std::string dataset;
  std::string which = "lowest";
  std::string preset;
  double corruption = 0, color_corr = 0, shift = 0;
  std::uint32_t resample_size = 0;
  std::string resample_name;
  std::uint32_t epochs = 0, replicas = 0, batch_size = 0;
  double lr = 0;
  std::vector<std::string> archs;
};

std::vector<std::uint32_t> parse_arch(const std::string& text) {
  std::vector<std::uint32_t> hidden;
  if (text == "linear") return hidden;
  for (const auto& part : split(text, 'x')) {
    const auto width = parse_uint(part, "hidden width");
    if (width == 0 || width > 4096) throw Error(ErrorCode::ConfigInvalid, "bad hidden width in '" + text + "'");
    hidden.push_back(static_cast<std::uint32_t>(width));
  }
  return hidden;
}

using Command = std::function<Artifacts(const PipelineConfig&)>;

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"clens: ensemble confusion scores and OOD accuracy prediction", "clens"};
  app.require_subcommand(1);
  Flags f;

  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"gen", {"generate synthetic datasets (presets: mixture, colored2, resample)", cmd_gen}},
      {"train", {"train the toy ensemble and write probability logs", cmd_train}},
      {"score", {"confusion scores per dataset", cmd_score}},
      {"partition", {"bin partitions, per-bin accuracy and easy/medium/hard groups", cmd_partition}},
      {"predict", {"predict OOD accuracy from ID labels", cmd_predict}},
      {"phases", {"training phase boundaries and entropy trajectories", cmd_phases}},
      {"fit", {"group model, complexity index and collinearity fits", cmd_fit}},
      {"extremes", {"lowest or highest confusion samples", cmd_extremes}},
      {"report", {"collect existing artifacts into one report", cmd_report}},
  };

  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    subs[name] = sub;
    sub->add_option("--config", f.config_file, "JSON config file; flags override it");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--manifest", f.manifest, "run manifest (JSON)");
    sub->add_option("--data-dir", f.data_dir, "dataset directory for train (default: --out)");
    sub->add_option("--seed", f.seed, "top-level seed");
    sub->add_option("--bins", f.bins, "number of confusion bins (default 40)");
    sub->add_option("--window", f.window, "epoch window a:b (1-based, inclusive)");
    sub->add_option("--epoch", f.epoch, "partition by entropy at a single epoch");
    sub->add_option("--thresholds", f.thresholds, "easy/hard correct-count thresholds lo:hi");
    sub->add_option("--tail-start", f.tail_start, "first epoch of the entropy-std tail (default 10)");
    sub->add_option("--k", f.k, "number of samples to list");
    sub->add_flag("--mistakes-only", f.mistakes_only, "only list ensemble mistakes");
    sub->add_option("--format", f.format, "csv or structured")->check(CLI::IsMember({"csv", "structured"}));
    sub->add_option("--dataset", f.dataset, "dataset for extremes (default: the ID set)");
    sub->add_option("--which", f.which, "lowest or highest")->check(CLI::IsMember({"lowest", "highest"}));
    sub->add_option("--preset", f.preset, "gen preset");
    sub->add_option("--corruption", f.corruption, "label corruption rate (colored2)");
    sub->add_option("--color-corr", f.color_corr, "color/class correlation (colored2)");
    sub->add_option("--shift", f.shift, "tilt toward confusing bins (resample)");
    sub->add_option("--resample-size", f.resample_size, "samples in the resampled set (default: ID size)");
    sub->add_option("--resample-name", f.resample_name, "name of the resampled dataset");
    sub->add_option("--epochs", f.epochs, "training epochs");
    sub->add_option("--replicas", f.replicas, "runs per architecture");
    sub->add_option("--batch-size", f.batch_size, "mini-batch size");
    sub->add_option("--lr", f.lr, "learning rate");
    sub->add_option("--arch", f.archs, "hidden widths like 16 or 32x32, repeatable ('linear' for none)");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  std::string name;
  CLI::App* sub = nullptr;
  for (const auto& [n, s] : subs) {
    if (s->parsed()) {
      name = n;
      sub = s;
    }
  }
  auto given = [&](const char* flag) { return sub->count(flag) > 0; };

  try {
    PipelineConfig config;
    if (given("--config")) {
      const auto doc = nlohmann::json::parse(read_file(f.config_file), nullptr, false);
      if (doc.is_discarded()) throw Error(ErrorCode::ConfigInvalid, f.config_file + " is not valid JSON");
      config = pipeline_config_from_json(doc, config);
    }
    if (given("--out")) config.out_dir = f.out;
    if (given("--manifest")) config.manifest = f.manifest;
    if (given("--data-dir")) config.data_dir = f.data_dir;
    if (given("--seed")) config.seed = f.seed;
    if (given("--bins")) config.n_bins = f.bins;
    if (given("--window")) config.window = parse_window(f.window);
    if (given("--epoch")) config.epoch = f.epoch;
    if (given("--thresholds")) config.thresholds = parse_thresholds(f.thresholds);
    if (given("--tail-start")) config.tail_start = f.tail_start;
    if (given("--k")) config.k = f.k;
    if (given("--mistakes-only")) config.mistakes_only = f.mistakes_only;
    if (given("--format")) config.format = f.format == "csv" ? OutputFormat::Csv : OutputFormat::Structured;
    if (given("--dataset")) config.dataset = f.dataset;
    if (given("--which")) config.which = f.which;
    if (given("--preset")) config.preset = f.preset;
    if (given("--corruption")) config.corruption = f.corruption;
    if (given("--color-corr")) config.color_corr = f.color_corr;
    if (given("--shift")) config.shift = f.shift;
    if (given("--resample-size")) config.resample_size = f.resample_size;
    if (given("--resample-name")) config.resample_name = f.resample_name;
    if (given("--epochs")) config.train.epochs = f.epochs;
    if (given("--replicas")) config.replicas = f.replicas;
    if (given("--batch-size")) config.train.batch_size = f.batch_size;
    if (given("--lr")) config.train.learning_rate = f.lr;
    if (given("--arch")) {
      config.archs.clear();
      for (const auto& a : f.archs) config.archs.push_back(parse_arch(a));
    }
    if (config.n_bins == 0) throw Error(ErrorCode::ConfigInvalid, "--bins must be positive");
    config.train.validate();

    DirLock lock(config.out_dir);
    const Artifacts written = commands.at(name).second(config);
    for (const auto& p : written) out << p.string() << '\n';
    return 0;
  } catch (const Error& e) {
    err << "clens " << name << ": " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "clens " << name << ": " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace clens
