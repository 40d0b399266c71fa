#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "clens/error.hpp"
#include "clens/predictor.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace clens;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoFailure;
}

double accuracy(const std::vector<std::uint32_t>& pred, const LabelVec& labels) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == labels[i];
  return static_cast<double>(ok) / pred.size();
}

// Three runs with random logs on an ID set; OOD datasets are given as row
// indices into the ID set.
struct World {
  std::vector<std::vector<ProbLog>> by_run;
  LabelVec labels;
  Manifest manifest;
};

World make_world(const std::string& name, std::uint64_t seed, std::uint32_t n, std::uint32_t c, std::uint32_t t,
                 const std::map<std::string, std::vector<std::size_t>>& oods, bool ood_labels = true) {
  std::mt19937_64 gen(seed);
  World w;
  auto logs = oracle::random_logs(gen, 3, t, n, c);
  w.labels = oracle::random_labels(gen, n, c);
  fixtures::RunLogs runs;
  std::vector<fixtures::DatasetSpec> datasets = {{"id", DatasetRole::Id, w.labels, {}}};
  for (auto& log : logs) runs[log.model_id]["id"] = log;
  for (const auto& [ood, index] : oods) {
    LabelVec l;
    for (auto i : index) l.push_back(w.labels[i]);
    datasets.push_back({ood, DatasetRole::Ood, ood_labels ? l : LabelVec{}, {}});
    for (auto& log : logs) {
      ProbLog g = log;
      g.n_samples = static_cast<std::uint32_t>(index.size());
      g.probs.clear();
      for (std::uint32_t e = 1; e <= t; ++e) {
        for (auto i : index) {
          const auto row = log.row(e, i);
          g.probs.insert(g.probs.end(), row.begin(), row.end());
        }
      }
      runs[log.model_id][ood] = g;
    }
  }
  w.manifest = read_manifest(fixtures::write_world(oracle::scratch(name), datasets, runs));
  return w;
}

std::vector<std::size_t> iota_index(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST(Mixture, WeightedAverage) {
  const auto r = predict_ood_accuracy(std::vector<double>{0.9, 0.5, 0.1}, std::vector<std::size_t>{5, 5, 5},
                                      std::vector<double>{0.2, 0.3, 0.5});
  EXPECT_NEAR(r.accuracy, 0.38, 1e-15);
  EXPECT_EQ(r.fallback_bins_used, 0u);
}

TEST(Mixture, EmptyBinBorrowsLowerNeighbourOnTie) {
  const auto r = predict_ood_accuracy(std::vector<double>{0.9, 0.0, 0.1}, std::vector<std::size_t>{3, 0, 3},
                                      std::vector<double>{0, 1, 0});
  EXPECT_EQ(r.accuracy, 0.9);
  EXPECT_EQ(r.fallback_bins_used, 1u);
  const auto far = predict_ood_accuracy(std::vector<double>{0.0, 0.0, 0.0, 0.4}, std::vector<std::size_t>{0, 0, 0, 2},
                                        std::vector<double>{1, 0, 0, 0});
  EXPECT_EQ(far.accuracy, 0.4);
}

TEST(Mixture, Errors) {
  const std::vector<double> acc = {0.5, 0.5};
  EXPECT_EQ(code_of([&] {
              predict_ood_accuracy(acc, std::vector<std::size_t>{1, 1}, std::vector<double>{1.0});
            }),
            ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([&] {
              predict_ood_accuracy(acc, std::vector<std::size_t>{1, 1}, std::vector<double>{0.5, 0.6});
            }),
            ErrorCode::RatiosNotNormalized);
  EXPECT_EQ(code_of([&] {
              predict_ood_accuracy(acc, std::vector<std::size_t>{0, 0}, std::vector<double>{0.5, 0.5});
            }),
            ErrorCode::AllIdBinsEmpty);
}

TEST(Mixture, MatchesOracleOnRandomInstances) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 40;
    std::vector<double> accs(n), ratios(n);
    std::vector<std::size_t> counts(n);
    std::vector<std::optional<double>> oacc(n);
    double s = 0;
    for (std::size_t k = 0; k < n; ++k) {
      counts[k] = gen() % 3 == 0 ? 0 : 1 + gen() % 9;
      accs[k] = u(gen);
      if (counts[k]) oacc[k] = accs[k];
      ratios[k] = gen() % 4 == 0 ? 0.0 : u(gen);
      s += ratios[k];
    }
    if (s == 0) continue;
    if (std::none_of(counts.begin(), counts.end(), [](auto c) { return c > 0; })) continue;
    for (auto& r : ratios) r /= s;
    double check = 0;
    for (double r : ratios) check += r;
    if (std::fabs(check - 1) > 1e-9) continue;
    EXPECT_NEAR(predict_ood_accuracy(accs, counts, ratios).accuracy, oracle::predict(oacc, ratios), 1e-12);
  }
}

TEST(Mixture, MonotoneInMassTowardsAccurateBins) {
  const std::vector<double> acc = {0.2, 0.9, 0.5};
  const std::vector<std::size_t> counts = {1, 1, 1};
  double last = -1;
  for (int step = 0; step <= 10; ++step) {
    const double moved = 0.05 * step;
    const double p = predict_ood_accuracy(acc, counts, std::vector<double>{0.5 - moved, 0.2 + moved, 0.3}).accuracy;
    EXPECT_GE(p, last);
    last = p;
  }
}

TEST(Predict, SelfPredictionIdentity) {
  const World w = make_world("pred_self", 1, 64, 10, 3, {{"copy", iota_index(64)}});
  for (std::uint32_t bins : {1u, 7u, 40u}) {
    for (const auto& id : w.manifest.model_ids()) {
      const auto r = predict_for_model(w.manifest, id, std::nullopt, bins, "copy");
      const ProbLog& log = w.manifest.log(id, "id");
      const double acc = accuracy(argmax_predict(log, log.n_epochs), w.labels);
      EXPECT_NEAR(r.predicted_accuracy, acc, 1e-12);
      EXPECT_NEAR(*r.actual_accuracy, acc, 1e-12);
      EXPECT_NEAR(*r.residual, 0.0, 1e-12);
      for (std::uint32_t t = 1; t <= 3; ++t) {
        EXPECT_NEAR(predict_epoch_variant(w.manifest, id, t, bins, "copy").predicted_accuracy, acc, 1e-12);
      }
    }
  }
}

TEST(Predict, SingleBinIgnoresOodRatios) {
  std::vector<std::size_t> subset = {0, 0, 0, 1, 2, 3, 5, 8};
  const World w = make_world("pred_one", 2, 40, 5, 2, {{"sub", subset}});
  const std::string id = w.manifest.model_ids()[1];
  const ProbLog& log = w.manifest.log(id, "id");
  EXPECT_NEAR(predict_for_model(w.manifest, id, std::nullopt, 1, "sub").predicted_accuracy,
              accuracy(argmax_predict(log, log.n_epochs), w.labels), 1e-12);
}

TEST(Predict, EpochVariantEqualsSingleEpochWindow) {
  std::vector<std::size_t> subset;
  for (std::size_t i = 0; i < 50; i += 3) subset.push_back(i);
  const World w = make_world("pred_et", 3, 50, 4, 4, {{"sub", subset}});
  for (std::uint32_t t = 1; t <= 4; ++t) {
    const auto a = predict_epoch_variant(w.manifest, "run0", t, 9, "sub");
    const auto b = predict_for_model(w.manifest, "run0", EpochWindow{t, t}, 9, "sub");
    EXPECT_EQ(a.predicted_accuracy, b.predicted_accuracy);
    EXPECT_EQ(a.partition_epoch, t);
  }
  EXPECT_EQ(code_of([&] { predict_epoch_variant(w.manifest, "run0", 5, 9, "sub"); }), ErrorCode::EpochOutOfRange);
  EXPECT_EQ(code_of([&] { predict_for_model(w.manifest, "nope", std::nullopt, 9, "sub"); }), ErrorCode::UnknownModel);
  EXPECT_EQ(code_of([&] { predict_for_model(w.manifest, "run0", std::nullopt, 9, "nope"); }),
            ErrorCode::UnknownDataset);
}

TEST(Predict, MatchesOracleAgainstMeasuredBins) {
  std::vector<std::size_t> subset;
  std::mt19937_64 gen(9);
  for (int i = 0; i < 80; ++i) subset.push_back(gen() % 60);
  const World w = make_world("pred_oracle", 4, 60, 6, 3, {{"sub", subset}});
  const auto runs = w.manifest.logs_for(w.manifest.scoring_ids(), "id");
  const auto ood_runs = w.manifest.logs_for(w.manifest.scoring_ids(), "sub");
  const auto id_scores = oracle::confusion(runs, 1, 3);
  const auto ood_scores = oracle::confusion(ood_runs, 1, 3);
  const std::uint32_t nb = 8;
  for (const auto& id : w.manifest.model_ids()) {
    const ProbLog& log = w.manifest.log(id, "id");
    std::vector<std::size_t> n(nb), ok(nb);
    for (std::size_t i = 0; i < 60; ++i) {
      const auto k = oracle::bin_of(id_scores[i], nb, 6);
      ++n[k];
      ok[k] += oracle::run_argmax(log, 3, i) == w.labels[i];
    }
    std::vector<std::optional<double>> accs(nb);
    for (std::uint32_t k = 0; k < nb; ++k) {
      if (n[k]) accs[k] = static_cast<double>(ok[k]) / n[k];
    }
    std::vector<double> ratios(nb, 0.0);
    for (double s : ood_scores) ratios[oracle::bin_of(s, nb, 6)] += 1.0 / ood_scores.size();
    EXPECT_NEAR(predict_for_model(w.manifest, id, std::nullopt, nb, "sub").predicted_accuracy,
                oracle::predict(accs, ratios), 1e-12);
  }
}

TEST(Report, RowsAndMeanConfusion) {
  std::vector<std::size_t> subset = {1, 2, 3, 4, 5, 6};
  const World w = make_world("pred_report", 5, 30, 3, 2, {{"a", subset}, {"b", iota_index(30)}}, false);
  const PredictionReport rep = prediction_report(w.manifest, PredictionConfig{});
  // (3 models + ensemble) x (id + 2 OOD)
  ASSERT_EQ(rep.rows.size(), 12u);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    const auto& a = rep.rows[i - 1];
    const auto& b = rep.rows[i];
    EXPECT_TRUE(std::tie(a.model_id, a.ood_dataset) < std::tie(b.model_id, b.ood_dataset));
  }
  for (const auto& r : rep.rows) {
    if (r.ood_dataset == "id") {
      EXPECT_NEAR(*r.residual, 0.0, 1e-12);
    } else {
      EXPECT_FALSE(r.actual_accuracy.has_value());
    }
    EXPECT_GE(r.predicted_accuracy, 0.0);
    EXPECT_LE(r.predicted_accuracy, 1.0);
  }
  const auto runs = w.manifest.logs_for(w.manifest.scoring_ids(), "id");
  double mean = 0;
  for (double s : oracle::confusion(runs, 1, 2)) mean += s / 30;
  EXPECT_NEAR(rep.mean_confusion.at("id"), mean, 1e-12);
}

TEST(Report, IdOnlyManifestGivesSelfRows) {
  const World w = make_world("pred_idonly", 6, 20, 3, 2, {});
  const PredictionReport rep = prediction_report(w.manifest, PredictionConfig{});
  ASSERT_EQ(rep.rows.size(), 4u);
  for (const auto& r : rep.rows) EXPECT_EQ(r.ood_dataset, "id");
}

TEST(Report, DuplicateModelsGiveIdenticalRows) {
  std::mt19937_64 gen(7);
  auto logs = oracle::random_logs(gen, 2, 2, 25, 4);
  const auto labels = oracle::random_labels(gen, 25, 4);
  const auto dir = oracle::scratch("pred_dup");
  write_cpl(logs[0], dir / "x.cpl");
  write_cpl(logs[1], dir / "other.cpl");
  write_file_atomic(dir / "id.labels.csv", format_labels(labels));
  ManifestSpec spec;
  spec.datasets.push_back({"id", DatasetRole::Id, 25, std::filesystem::path("id.labels.csv"), std::nullopt});
  for (auto [id, file] : {std::pair{"p", "x.cpl"}, {"q", "x.cpl"}, {"r", "other.cpl"}}) {
    RunEntry e;
    e.model_id = id;
    e.family = "f";
    e.log_paths["id"] = file;
    spec.runs.push_back(e);
  }
  write_manifest(spec, dir / "manifest.json");
  const auto rep = prediction_report(read_manifest(dir / "manifest.json"), PredictionConfig{});
  const OodPrediction* p = nullptr;
  const OodPrediction* q = nullptr;
  for (const auto& r : rep.rows) {
    if (r.model_id == "p") p = &r;
    if (r.model_id == "q") q = &r;
  }
  ASSERT_TRUE(p && q);
  EXPECT_EQ(p->predicted_accuracy, q->predicted_accuracy);
  EXPECT_EQ(p->actual_accuracy, q->actual_accuracy);
}
