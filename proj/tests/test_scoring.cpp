#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "clens/error.hpp"
#include "clens/scoring.hpp"
#include "oracle.hpp"

using namespace clens;

namespace {

ProbLog rows_log(const std::string& id, std::uint32_t c, const std::vector<std::vector<float>>& rows_by_epoch) {
  ProbLog log;
  log.model_id = id;
  log.n_epochs = static_cast<std::uint32_t>(rows_by_epoch.size());
  log.n_samples = static_cast<std::uint32_t>(rows_by_epoch.front().size() / c);
  log.n_classes = c;
  for (const auto& e : rows_by_epoch) log.probs.insert(log.probs.end(), e.begin(), e.end());
  return log;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoFailure;
}

}  // namespace

TEST(Entropy, ClosedForms) {
  std::vector<double> u(10, 0.1);
  EXPECT_NEAR(entropy(u), std::log(10.0), 1e-12);
  EXPECT_NEAR(entropy(u), 2.302585093, 1e-9);
  EXPECT_EQ(entropy(std::vector<double>{0, 1, 0}), 0.0);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.25, 0.25}), 1.5 * std::log(2.0), 1e-12);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.25, 0.25}), 1.039720771, 1e-9);
}

TEST(Entropy, RangeOnRandomDistributions) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t c = 2 + gen() % 30;
    std::vector<double> p(c);
    double s = 0;
    for (auto& v : p) s += (v = std::pow(u(gen), 1 + 10 * u(gen)));
    for (auto& v : p) v /= s;
    const double h = entropy(p);
    ASSERT_GE(h, 0.0);
    ASSERT_LE(h, std::log(static_cast<double>(c)));
    ASSERT_NEAR(h, oracle::entropy(p), 1e-12);
  }
}

TEST(Entropy, RejectsNonDistributions) {
  EXPECT_EQ(code_of([] { entropy(std::vector<double>{}); }), ErrorCode::NotADistribution);
  EXPECT_EQ(code_of([] { entropy(std::vector<double>{0.7, 0.7}); }), ErrorCode::NotADistribution);
  EXPECT_EQ(code_of([] { entropy(std::vector<double>{1.5, -0.5}); }), ErrorCode::NotADistribution);
}

TEST(EnsembleMean, SmallCases) {
  const auto a = rows_log("a", 2, {{1, 0}});
  const auto b = rows_log("b", 2, {{0, 1}});
  const auto c = rows_log("c", 2, {{1, 0}});
  EXPECT_EQ(ensemble_mean(EnsembleView({&a, &b}), 1, 0), (std::vector<double>{0.5, 0.5}));
  const auto three = ensemble_mean(EnsembleView({&a, &c, &b}), 1, 0);
  EXPECT_NEAR(three[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(three[1], 1.0 / 3, 1e-15);
  const auto single = rows_log("s", 3, {{0.2f, 0.5f, 0.3f}});
  const auto m1 = ensemble_mean(EnsembleView({&single}), 1, 0);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(m1[j], static_cast<double>(single.probs[j]));
  EXPECT_NEAR(entropy_scores_at(EnsembleView({&a, &b}), 1)[0], std::log(2.0), 1e-15);
  EXPECT_EQ(entropy_scores_at(EnsembleView({&a, &c}), 1)[0], 0.0);
}

TEST(EnsembleMean, InvariantToOrderAndDuplication) {
  std::mt19937_64 gen(12);
  auto logs = oracle::random_logs(gen, 6, 3, 20, 7);
  auto ptrs = oracle::ptrs(logs);
  const auto base = confusion_scores(EnsembleView(ptrs), {1, 3});
  auto shuffled = ptrs;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  // Renaming changes the sort order inside the view as well.
  std::vector<ProbLog> renamed = logs;
  for (std::size_t k = 0; k < renamed.size(); ++k) renamed[k].model_id = "z" + std::to_string(renamed.size() - k);
  auto doubled = ptrs;
  doubled.insert(doubled.end(), ptrs.begin(), ptrs.end());
  EXPECT_EQ(confusion_scores(EnsembleView(shuffled), {1, 3}), base);
  EXPECT_EQ(confusion_scores(EnsembleView(oracle::ptrs(renamed)), {1, 3}), base);
  EXPECT_EQ(confusion_scores(EnsembleView(doubled), {1, 3}), base);
}

TEST(Scores, MatchScalarOracle) {
  std::mt19937_64 gen(21);
  auto logs = oracle::random_logs(gen, 10, 4, 50, 10);
  const auto runs = oracle::ptrs(logs);
  const EnsembleView view(runs);
  for (std::uint32_t t = 1; t <= 4; ++t) {
    const auto s = entropy_scores_at(view, t);
    for (std::size_t i = 0; i < 50; ++i) ASSERT_NEAR(s[i], oracle::entropy_at(runs, t, i), 1e-12);
  }
  const auto conf = confusion_scores(view, {2, 4});
  const auto ref = oracle::confusion(runs, 2, 4);
  for (std::size_t i = 0; i < 50; ++i) ASSERT_NEAR(conf[i], ref[i], 1e-12);
  const auto sd = entropy_std(view, 2);
  const auto sd_ref = oracle::entropy_std(runs, 2);
  for (std::size_t i = 0; i < 50; ++i) ASSERT_NEAR(sd[i], sd_ref[i], 1e-12);
  const auto pred = ensemble_predict(view, 3);
  for (std::size_t i = 0; i < 50; ++i) ASSERT_EQ(pred[i], oracle::argmax(oracle::mean_row(runs, 3, i)));
  const auto own = argmax_predict(logs[4], 2);
  for (std::size_t i = 0; i < 50; ++i) ASSERT_EQ(own[i], oracle::run_argmax(logs[4], 2, i));
}

TEST(Confusion, WindowIdentitiesAndMean) {
  std::mt19937_64 gen(5);
  auto logs = oracle::random_logs(gen, 3, 5, 8, 4);
  const EnsembleView view = EnsembleView::of(logs);
  for (std::uint32_t t = 1; t <= 5; ++t) EXPECT_EQ(confusion_scores(view, {t, t}), entropy_scores_at(view, t));

  // Entropy series 0, ln2, then 0: mean ln2 / 3.
  const auto a = rows_log("a", 2, {{1, 0}, {1, 0}, {0, 1}});
  const auto b = rows_log("b", 2, {{1, 0}, {0, 1}, {0, 1}});
  EXPECT_NEAR(confusion_scores(EnsembleView({&a, &b}), {1, 3})[0], std::log(2.0) / 3, 1e-15);
  EXPECT_EQ(confusion_scores(EnsembleView({&a, &a}), {1, 3})[0], 0.0);
}

TEST(EntropyStd, ConstantAndTwoPoint) {
  const auto a = rows_log("a", 2, {{0.5f, 0.5f}, {0.5f, 0.5f}, {0.5f, 0.5f}});
  EXPECT_EQ(entropy_std(EnsembleView({&a}), 1)[0], 0.0);
  // Series [0, ln2] over the tail: population std ln2 / 2.
  const auto b = rows_log("b", 2, {{1, 0}, {0.5f, 0.5f}});
  EXPECT_NEAR(entropy_std(EnsembleView({&b}), 1)[0], std::log(2.0) / 2, 1e-15);
  EXPECT_EQ(code_of([&] { entropy_std(EnsembleView({&b}), 2); }), ErrorCode::TailTooShort);
}

TEST(Predict, ArgmaxAndTies) {
  const auto a = rows_log("a", 3, {{0.2f, 0.5f, 0.3f}});
  EXPECT_EQ(ensemble_predict(EnsembleView({&a}), 1)[0], 1u);
  const auto tie = rows_log("t", 2, {{0.5f, 0.5f}});
  EXPECT_EQ(ensemble_predict(EnsembleView({&tie}), 1)[0], 0u);
  EXPECT_EQ(argmax_predict(tie, 1)[0], 0u);
}

TEST(EnsembleView, ShapeAndRangeErrors) {
  const auto a = rows_log("a", 2, {{1, 0}, {1, 0}});
  const auto b = rows_log("b", 3, {{1, 0, 0}, {1, 0, 0}});
  const auto short_log = rows_log("s", 2, {{1, 0}});
  EXPECT_EQ(code_of([&] { EnsembleView({&a, &b}); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([] { EnsembleView(std::vector<const ProbLog*>{}); }), ErrorCode::ShapeMismatch);
  const EnsembleView v({&a, &short_log});
  EXPECT_EQ(v.n_epochs(), 1u);
  EXPECT_EQ(code_of([&] { entropy_scores_at(v, 2); }), ErrorCode::EpochOutOfRange);
  EXPECT_EQ(code_of([&] { entropy_scores_at(v, 0); }), ErrorCode::EpochOutOfRange);
  EXPECT_EQ(code_of([&] { confusion_scores(v, {1, 2}); }), ErrorCode::WindowOutOfRange);
  EXPECT_EQ(code_of([&] { confusion_scores(EnsembleView({&a}), {2, 1}); }), ErrorCode::WindowOutOfRange);
}

TEST(ScoreTable, AgreesWithSeparateCalls) {
  std::mt19937_64 gen(8);
  auto logs = oracle::random_logs(gen, 4, 12, 10, 5);
  const EnsembleView view = EnsembleView::of(logs);
  const ScoreTable table = score_table(view, "x", EpochWindow{3, 9}, 10);
  EXPECT_EQ(table.confusion, confusion_scores(view, {3, 9}));
  EXPECT_EQ(table.entropy_std, entropy_std(view, 10));
  const auto at5 = entropy_scores_at(view, 5);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(table.entropy_at(i, 5), at5[i]);
  double mean = 0;
  for (double v : table.confusion) mean += v;
  EXPECT_NEAR(table.mean_confusion(), mean / 10, 1e-15);
  // Tail too short: column left empty rather than failing the table.
  EXPECT_TRUE(score_table(view, "x", std::nullopt, 12).entropy_std.empty());
  EXPECT_EQ(score_table(view, "x").window, (EpochWindow{1, 12}));
}
