#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "dpnc/episode.hpp"
#include "dpnc/error.hpp"
#include "dpnc/rng.hpp"

using namespace dpnc;

namespace {

Episode make_episode(std::vector<int> labels, std::size_t dim) {
  std::vector<double> data(labels.size() * dim);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = 0.25 * static_cast<double>(i) - 1.0;
  return Episode(std::move(labels), dim, std::move(data));
}

}  // namespace

TEST(ValidateEpisode, AcceptsMinimalValidEpisode) {
  EXPECT_FALSE(validate_episode(make_episode({1, 1, 2}, 2)).has_value());
}

TEST(ValidateEpisode, RejectsFirstLabelNotOne) {
  auto v = validate_episode(make_episode({2, 1}, 1));
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->what, "labels[0] != 1");
  EXPECT_EQ(v->index, 0u);
}

TEST(ValidateEpisode, RejectsSkippedClassId) {
  auto v = validate_episode(make_episode({1, 3, 2}, 1));
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->what, "label skips a class id at t=1");
  EXPECT_EQ(v->index, 1u);
}

TEST(ValidateEpisode, ReportsFirstViolationOnly) {
  auto v = validate_episode(make_episode({1, 2, 4, 9}, 1));
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->index, 2u);
}

TEST(ValidateEpisode, RejectsEmptyAndShapeErrors) {
  EXPECT_TRUE(validate_episode(Episode{}).has_value());
  Episode e = make_episode({1, 2}, 2);
  e.data.pop_back();
  EXPECT_TRUE(validate_episode(e).has_value());
  Episode z = make_episode({1}, 1);
  z.dim = 0;
  z.data.clear();
  EXPECT_TRUE(validate_episode(z).has_value());
}

TEST(Canonicalize, SpecExamples) {
  EXPECT_EQ(canonicalize_labels(std::vector<int>{7, 7, 2, 7}), (std::vector<int>{1, 1, 2, 1}));
  EXPECT_EQ(canonicalize_labels(std::vector<int>{1, 2, 3}), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(canonicalize_labels(std::vector<int>{5, 4, 5, 4, 9}), (std::vector<int>{1, 2, 1, 2, 3}));
}

TEST(Canonicalize, EmptyInputThrows) {
  EXPECT_THROW(canonicalize_labels(std::vector<int>{}), std::invalid_argument);
}

TEST(Canonicalize, IdempotentAndRelabelingInvariant) {
  RngStream rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(30);
    std::vector<int> raw(n);
    for (auto& r : raw) r = static_cast<int>(rng.uniform_index(8)) - 3;
    const auto c = canonicalize_labels(raw);
    EXPECT_FALSE(validate_labels(c).has_value());
    EXPECT_EQ(canonicalize_labels(c), c);
    // Bijective relabeling x -> 100 - 7x.
    std::vector<int> mapped(n);
    for (std::size_t i = 0; i < n; ++i) mapped[i] = 100 - 7 * raw[i];
    EXPECT_EQ(canonicalize_labels(mapped), c);
    // Partition preserved.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(raw[i] == raw[j], c[i] == c[j]);
  }
}

TEST(Setting, RoundTripsNames) {
  for (Setting s : {Setting::SequentialObservation, Setting::FullyUnobserved})
    EXPECT_EQ(parse_setting(to_string(s)), s);
  EXPECT_ANY_THROW(parse_setting("sideways"));
}

TEST(EpisodeJson, RoundTripIsExact) {
  RngStream rng(5);
  std::vector<Episode> es;
  for (int i = 0; i < 5; ++i) {
    Episode e = make_episode({1, 2, 1, 3}, 3);
    for (auto& v : e.data) v = rng.normal() * 1e3;
    es.push_back(e);
  }
  std::stringstream ss;
  write_episodes_jsonl(ss, es);
  std::istringstream in(ss.str());
  EXPECT_EQ(read_episodes_jsonl(in), es);
}

TEST(EpisodeJson, RejectsInvalidEpisodeLines) {
  EXPECT_THROW(episode_from_json_line(R"({"labels":[2],"obs":[[0.0]]})"), DataError);
  EXPECT_THROW(episode_from_json_line("not json"), DataError);
  EXPECT_THROW(episode_from_json_line(R"({"labels":[1,2],"obs":[[0.0],[1.0,2.0]]})"), DataError);
}

TEST(Rng, EqualSeedsGiveEqualDraws) {
  RngStream a(123), b(123);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitDependsOnlyOnSeedAndIndex) {
  RngStream a(9), b(9);
  for (int i = 0; i < 57; ++i) a.next_u64();
  RngStream ca = a.split(4), cb = b.split(4);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(ca.next_u64(), cb.next_u64());
  EXPECT_NE(b.split(4).next_u64(), b.split(5).next_u64());
}

TEST(Rng, SplitStreamsAreUncorrelated) {
  RngStream root(77);
  RngStream x = root.split(0), y = root.split(1);
  const int n = 200000;
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const double u = x.uniform(), v = y.uniform();
    sx += u;
    sy += v;
    sxy += u * v;
    sxx += u * u;
    syy += v * v;
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(n));
}

TEST(Rng, DistributionMoments) {
  RngStream rng(2024);
  const int n = 200000;
  double su = 0, sn = 0, snn = 0, sg = 0, sgg = 0, sb = 0;
  for (int i = 0; i < n; ++i) {
    su += rng.uniform();
    const double z = rng.normal();
    sn += z;
    snn += z * z;
    const double g = rng.gamma(2.5);
    sg += g;
    sgg += g * g;
    sb += rng.beta(2.0, 6.0);
  }
  EXPECT_NEAR(su / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(sn / n, 0.0, 4 / std::sqrt(n));
  EXPECT_NEAR(snn / n, 1.0, 4 * std::sqrt(2.0 / n));
  EXPECT_NEAR(sg / n, 2.5, 4 * std::sqrt(2.5 / n));
  EXPECT_NEAR(sgg / n - (sg / n) * (sg / n), 2.5, 0.05);
  // Beta(2, 6): mean 0.25, variance 12 / (64 * 9).
  EXPECT_NEAR(sb / n, 0.25, 4 * std::sqrt(12.0 / 576.0 / n));
}

TEST(Rng, SmallShapeGammaMean) {
  RngStream rng(3);
  const int n = 200000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += rng.gamma(0.3);
  EXPECT_NEAR(s / n, 0.3, 4 * std::sqrt(0.3 / n));
}

TEST(Rng, CategoricalFrequencies) {
  RngStream rng(8);
  const std::vector<double> w{1.0, 0.0, 3.0, 6.0};
  std::vector<int> hits(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++hits[rng.categorical(w)];
  EXPECT_EQ(hits[1], 0);
  for (int k : {0, 2, 3}) {
    const double p = w[k] / 10.0;
    EXPECT_NEAR(hits[k] / double(n), p, 4 * std::sqrt(p * (1 - p) / n));
  }
}

TEST(Rng, UniformOpenExcludesEndpoints) {
  RngStream rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform_open();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
