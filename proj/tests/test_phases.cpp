#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "clens/error.hpp"
#include "clens/phases.hpp"
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

MetricsSeries series(const std::vector<double>& train_loss, const std::vector<double>& test_loss,
                     const std::vector<double>& train_acc, const std::vector<double>& test_acc) {
  MetricsSeries m;
  for (std::size_t t = 0; t < train_loss.size(); ++t) {
    const auto e = static_cast<std::uint32_t>(t + 1);
    m.rows.push_back({e, "train", train_loss[t], train_acc[t]});
    m.rows.push_back({e, "id", test_loss[t], test_acc[t]});
  }
  return m;
}

}  // namespace

TEST(Trajectory, OneHotAndUniform) {
  const auto hot = oracle::one_hot("a", 10, {{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(mean_entropy_trajectory(EnsembleView({&hot})), (std::vector<double>{0.0, 0.0}));
  ProbLog flat{"u", 3, 4, 10, std::vector<float>(120, 0.1f)};
  for (double v : mean_entropy_trajectory(EnsembleView({&flat}))) EXPECT_NEAR(v, 2.302585, 1e-6);
}

TEST(Trajectory, MatchesScalarOracle) {
  std::mt19937_64 gen(3);
  auto logs = oracle::random_logs(gen, 5, 6, 30, 8);
  const auto runs = oracle::ptrs(logs);
  const auto got = mean_entropy_trajectory(EnsembleView(runs));
  for (std::uint32_t t = 1; t <= 6; ++t) {
    long double s = 0;
    for (std::size_t i = 0; i < 30; ++i) s += oracle::entropy_at(runs, t, i);
    EXPECT_NEAR(got[t - 1], static_cast<double>(s / 30), 1e-12);
  }
}

TEST(MovingAverage, CenteredWithTruncatedEdges) {
  const auto s = moving_average({1, 2, 3, 4, 10}, 3);
  EXPECT_EQ(s, (std::vector<double>{1.5, 2, 3, 17.0 / 3, 7}));
  EXPECT_EQ(moving_average({4, 5}, 1), (std::vector<double>{4, 5}));
  EXPECT_EQ(code_of([] { moving_average({1, 2, 3}, 2); }), ErrorCode::ConfigInvalid);
}

TEST(Phases, GeneratedCurvesHitChangePoints) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PhaseCurveSpec spec;
    spec.seed = seed;
    const auto r = detect_phases(synthetic_phase_metrics(spec), "train", "id", {"id"});
    ASSERT_TRUE(r.t1 && r.t2);
    EXPECT_NEAR(static_cast<double>(*r.t1), 5.0, 1.0) << "seed " << seed;
    EXPECT_NEAR(static_cast<double>(*r.t2), 10.0, 1.0) << "seed " << seed;
  }
}

TEST(Phases, MonotoneTestLossHasNoT1) {
  std::vector<double> down, acc;
  for (int t = 0; t < 12; ++t) {
    down.push_back(2.0 / (1 + t));
    acc.push_back(std::min(0.9, 0.1 * t));
  }
  const auto r = detect_phases(series(down, down, acc, acc), "train", "id", {"id"});
  EXPECT_FALSE(r.t1.has_value());
}

TEST(Phases, ConstantAccuraciesGiveT2AtFirstEpoch) {
  std::vector<double> loss, acc(10, 0.7);
  for (int t = 0; t < 10; ++t) loss.push_back(1.0 - 0.05 * t);
  EXPECT_EQ(detect_phases(series(loss, loss, acc, acc), "train", "id", {"id"}).t2, 1u);
}

TEST(Phases, InvariantToAffineLossRescaling) {
  PhaseCurveSpec spec;
  spec.seed = 4;
  const MetricsSeries base = synthetic_phase_metrics(spec);
  const auto ref = detect_phases(base, "train", "id", {"id"});
  for (auto [a, b] : {std::pair{3.0, 0.0}, {0.5, 7.0}, {10.0, 1.0}}) {
    MetricsSeries scaled = base;
    for (auto& row : scaled.rows) row.loss = a * row.loss + b;
    const auto r = detect_phases(scaled, "train", "id", {"id"});
    EXPECT_EQ(r.t1, ref.t1);
    EXPECT_EQ(r.t2, ref.t2);
  }
}

TEST(Phases, Errors) {
  std::vector<double> four(4, 0.5);
  EXPECT_EQ(code_of([&] { detect_phases(series(four, four, four, four), "train", "id", {"id"}); }),
            ErrorCode::TooFewEpochs);
  std::vector<double> six(6, 0.5);
  EXPECT_EQ(code_of([&] { detect_phases(series(six, six, six, six), "train", "nope", {"id"}); }),
            ErrorCode::UnknownDataset);
  EXPECT_EQ(code_of([&] { detect_phases(series(six, six, six, six), "train", "id", {}); }),
            ErrorCode::InvalidMetrics);
}
