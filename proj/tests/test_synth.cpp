#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "clens/error.hpp"
#include "clens/io.hpp"
#include "clens/partition.hpp"
#include "clens/synth.hpp"
#include "oracle.hpp"

using namespace clens;

namespace {

bool has_tag(const std::string& tags, const std::string& tag) {
  for (const auto& t : split(tags, ';')) {
    if (t == tag) return true;
  }
  return false;
}

SynthConfig small_config() {
  SynthConfig c;
  c.n_classes = 4;
  c.core_dims = 3;
  c.nuisance_dims = 4;
  c.n_train = 500;
  c.n_id = 400;
  c.seed = 9;
  c.ood.push_back({"shifted", 300, 0.5, 2.0, 1.0});
  return c;
}

std::vector<double> nuisance_mean(const SynthDataset& d, const SynthConfig& c,
                                  const std::function<bool(std::size_t)>& keep) {
  std::vector<double> m(c.nuisance_dims, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!keep(i)) continue;
    ++n;
    for (std::uint32_t j = 0; j < c.nuisance_dims; ++j) m[j] += d.row(i)[c.core_dims + j];
  }
  for (auto& v : m) v /= static_cast<double>(n);
  return m;
}

}  // namespace

TEST(Mixture, DeterministicAndSeedSensitive) {
  const auto a = gen_mixture(small_config());
  const auto b = gen_mixture(small_config());
  EXPECT_EQ(a.train.features, b.train.features);
  EXPECT_EQ(a.ood[0].tags, b.ood[0].tags);
  EXPECT_EQ(encode_features(a.id), encode_features(b.id));
  auto other = small_config();
  other.seed = 10;
  EXPECT_NE(gen_mixture(other).train.features, a.train.features);
}

TEST(Mixture, NoCorruptionWithoutRate) {
  const auto b = gen_mixture(small_config());
  for (const auto* d : {&b.train, &b.id, &b.ood[0]}) {
    for (std::size_t i = 0; i < d->size(); ++i) {
      EXPECT_FALSE(has_tag(d->tags[i], "corrupted"));
      EXPECT_EQ(d->labels[i], d->latent[i]);
    }
  }
}

TEST(Mixture, CorruptionCountWithinBinomialBound) {
  auto c = small_config();
  c.n_train = 10000;
  c.corruption_rate = 0.1;
  const auto b = gen_mixture(c);
  std::size_t corrupted = 0;
  for (std::size_t i = 0; i < b.train.size(); ++i) {
    const bool tagged = has_tag(b.train.tags[i], "corrupted");
    EXPECT_EQ(tagged, b.train.labels[i] != b.train.latent[i]);
    corrupted += tagged;
  }
  EXPECT_GE(corrupted, 900u);
  EXPECT_LE(corrupted, 1100u);
  // Evaluation splits keep clean labels.
  EXPECT_EQ(b.id.labels, b.id.latent);
}

TEST(Mixture, FullStrengthRuleTagsEverySourceSample) {
  auto c = small_config();
  c.n_train = 4000;
  c.class_specific.push_back({0, 1, 1.0});
  const auto b = gen_mixture(c);
  std::size_t class0 = 0;
  for (std::size_t i = 0; i < b.train.size(); ++i) {
    if (b.train.latent[i] != 0) {
      EXPECT_FALSE(has_tag(b.train.tags[i], "class_specific_sp(0->1)"));
      continue;
    }
    ++class0;
    EXPECT_TRUE(has_tag(b.train.tags[i], "class_specific_sp(0->1)"));
  }
  EXPECT_GT(class0, 800u);
  // Tagged class-0 samples carry the class-1 nuisance signature.
  const auto tagged = nuisance_mean(b.train, c, [&](std::size_t i) { return b.train.latent[i] == 0; });
  const auto class1 = nuisance_mean(b.train, c, [&](std::size_t i) { return b.train.latent[i] == 1; });
  const auto class2 = nuisance_mean(b.train, c, [&](std::size_t i) { return b.train.latent[i] == 2; });
  double d01 = 0, d02 = 0;
  for (std::uint32_t j = 0; j < c.nuisance_dims; ++j) {
    d01 += std::pow(tagged[j] - class1[j], 2);
    d02 += std::pow(tagged[j] - class2[j], 2);
  }
  EXPECT_LT(std::sqrt(d01), 0.2);
  EXPECT_GT(std::sqrt(d02), 1.0);
}

TEST(Mixture, WeakTagsMatchNuisanceOffset) {
  auto c = small_config();
  c.n_train = 6000;
  c.weak.push_back({2, {1, 3}, 0.5});
  const auto b = gen_mixture(c);
  for (std::uint32_t y : {1u, 3u}) {
    const auto on = nuisance_mean(b.train, c, [&](std::size_t i) {
      return b.train.latent[i] == y && has_tag(b.train.tags[i], "weak_sp(2)");
    });
    const auto off = nuisance_mean(b.train, c, [&](std::size_t i) {
      return b.train.latent[i] == y && !has_tag(b.train.tags[i], "weak_sp(2)");
    });
    EXPECT_NEAR(on[2] - off[2], c.nuisance_scale, 0.2);
    EXPECT_NEAR(on[0] - off[0], 0.0, 0.2);
  }
  for (std::size_t i = 0; i < b.train.size(); ++i) {
    if (b.train.latent[i] == 0 || b.train.latent[i] == 2) EXPECT_FALSE(has_tag(b.train.tags[i], "weak_sp(2)"));
  }
}

TEST(Mixture, ConfigJsonRoundTripAndValidation) {
  auto c = mixture_preset(4);
  const auto back = synth_config_from_json(synth_config_to_json(c));
  EXPECT_EQ(synth_config_to_json(back), synth_config_to_json(c));
  c.corruption_rate = 1.5;
  EXPECT_THROW(c.validate(), Error);
  auto d = small_config();
  d.class_specific.push_back({0, 0, 0.3});
  EXPECT_THROW(gen_mixture(d), Error);
}

TEST(Resample, MatchingRatiosWithinOneSample) {
  const auto b = gen_mixture(small_config());
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0, std::log(4.0));
  std::vector<double> scores(b.id.size());
  for (auto& s : scores) s = u(gen);
  const auto part = bin_scores(scores, 10, 4);
  const auto res = resample_by_bins(b.id, scores, part.ratios, b.id.size(), 3);
  ASSERT_EQ(res.dataset.size(), b.id.size());
  std::vector<std::size_t> realized(10, 0);
  for (auto src : res.source_index) ++realized[part.assignment[src]];
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_LE(std::abs(static_cast<long>(realized[k]) - static_cast<long>(part.counts[k])), 1);
  }
  for (std::size_t i = 0; i < res.dataset.size(); ++i) {
    EXPECT_EQ(res.dataset.labels[i], b.id.labels[res.source_index[i]]);
    EXPECT_EQ(res.dataset.tags[i], b.id.tags[res.source_index[i]]);
  }
}

TEST(Resample, AllMassOnFirstBin) {
  const auto b = gen_mixture(small_config());
  std::vector<double> scores(b.id.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = (i % 5) * 0.25;
  std::vector<double> target(5, 0.0);
  target[0] = 1.0;
  const auto part = bin_scores(scores, 5, 4);
  const auto res = resample_by_bins(b.id, scores, target, 123, 1);
  EXPECT_EQ(res.dataset.size(), 123u);
  for (auto src : res.source_index) EXPECT_EQ(part.assignment[src], 0u);
  std::vector<double> bad(5, 0.2);
  bad[4] = 0.3;
  EXPECT_THROW(resample_by_bins(b.id, scores, bad, 10, 1), Error);
  // A targeted bin with no source samples cannot be filled.
  std::vector<double> empty_bin(5, 0.0);
  empty_bin[4] = 1.0;
  try {
    resample_by_bins(b.id, scores, empty_bin, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySourceBin);
  }
}

TEST(LargestRemainder, TiesGoToLowerIndex) {
  EXPECT_EQ(largest_remainder(std::vector<double>{0.5, 0.5}, 3), (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(largest_remainder(std::vector<double>{0.2, 0.3, 0.5}, 10), (std::vector<std::size_t>{2, 3, 5}));
  const auto c = largest_remainder(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, 100);
  EXPECT_EQ(c, (std::vector<std::size_t>{34, 33, 33}));
}

TEST(GatherRows, PicksRowsInOrder) {
  std::mt19937_64 gen(5);
  const auto log = oracle::random_logs(gen, 1, 2, 6, 3)[0];
  const std::vector<std::size_t> index = {5, 0, 5};
  const auto g = gather_rows(log, index);
  EXPECT_EQ(g.n_samples, 3u);
  for (std::uint32_t t = 1; t <= 2; ++t) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::uint32_t j = 0; j < 3; ++j) EXPECT_EQ(g.row(t, i)[j], log.row(t, index[i])[j]);
    }
  }
}

TEST(Colored, PerfectCorrelationAndNoCorruption) {
  const auto b = gen_colored_two_class(0.0, 1.0, 3);
  ASSERT_EQ(b.ood.size(), 2u);
  EXPECT_EQ(b.ood[0].name, "ood_all_green");
  EXPECT_EQ(b.ood[1].name, "ood_all_red");
  const std::uint32_t d = b.train.n_features;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < b.train.size(); ++i) {
    EXPECT_EQ(b.train.tags[i], "clean");
    const bool red = b.train.row(i)[d - 2] > b.train.row(i)[d - 1];
    agree += red == (b.train.labels[i] == 0);
  }
  EXPECT_GT(static_cast<double>(agree) / b.train.size(), 0.99);
  // Every all-green sample of class 0 carries the class-1 colour.
  for (std::size_t i = 0; i < b.ood[0].size(); ++i) {
    EXPECT_EQ(has_tag(b.ood[0].tags[i], "class_specific_sp(0->1)"), b.ood[0].labels[i] == 0);
  }
}

TEST(Colored, CorruptionTagsMatchFlips) {
  const auto b = gen_colored_two_class(0.1, 0.8, 5, 5000, 100);
  std::size_t flips = 0, spurious = 0;
  for (std::size_t i = 0; i < b.train.size(); ++i) {
    const bool flipped = b.train.labels[i] != b.train.latent[i];
    EXPECT_EQ(has_tag(b.train.tags[i], "corrupted"), flipped);
    flips += flipped;
    spurious += b.train.tags[i].find("class_specific_sp") != std::string::npos;
  }
  EXPECT_NEAR(flips / 5000.0, 0.1, 0.02);
  EXPECT_NEAR(spurious / 5000.0, 0.2, 0.02);
  EXPECT_THROW(gen_colored_two_class(1.5, 0.8, 1), Error);
}

TEST(FeatureFiles, RoundTrip) {
  const auto b = gen_mixture(small_config());
  const auto dir = oracle::scratch("cft");
  write_dataset(b.id, dir, "# header");
  const auto back = read_dataset(dir, "id", 4);
  EXPECT_EQ(back.features, b.id.features);
  EXPECT_EQ(back.labels, b.id.labels);
  EXPECT_EQ(back.tags, b.id.tags);
  EXPECT_EQ(back.n_features, b.id.n_features);
  const std::string bytes = encode_features(b.id);
  EXPECT_EQ(bytes.substr(0, 4), "CFT1");
  EXPECT_THROW(decode_features("XXXX" + bytes.substr(4)), Error);
  EXPECT_THROW(decode_features(bytes.substr(0, bytes.size() - 2)), Error);
}
