#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dpnc/crp.hpp"
#include "dpnc/error.hpp"
#include "dpnc/metrics.hpp"
#include "dpnc/pfilter.hpp"
#include "dpnc/simgen.hpp"
#include "support/oracles.hpp"

using namespace dpnc;

namespace {

// Likelihood that ignores the observation: the predictive is 1 for every x.
class FlatFamily final : public Family {
 public:
  std::string kind() const override { return "flat"; }
  std::size_t dim() const override { return 1; }
  std::size_t stat_size() const override { return 1; }
  HyperParams prior() const override { return {{0.0}, 0.0}; }
  bool in_support(std::span<const double>) const override { return true; }
  void suff_stats(std::span<const double>, std::span<double> out) const override { out[0] = 1.0; }
  double log_base_measure(std::span<const double>) const override { return 0.0; }
  bool admissible(std::span<const double>, double) const override { return true; }
  std::size_t compiled_size() const override { return 1; }
  void compile(std::span<const double>, double, std::span<double> out) const override { out[0] = 0.0; }
  double log_predictive_compiled(std::span<const double>, std::span<const double>) const override { return 0.0; }
  std::vector<double> prior_params() const override { return {}; }
  FamilyPtr with_prior_params(std::span<const double>) const override { return std::make_shared<FlatFamily>(); }
  nlohmann::json to_json() const override { return {{"family", "flat"}}; }
};

Episode one_dim_episode(std::vector<int> labels, std::vector<double> xs) {
  return Episode(std::move(labels), 1, std::move(xs));
}

Episode random_small_episode(RngStream& rng, std::size_t T, const oracle::Nig& p) {
  SyntheticConfig cfg;
  cfg.dim = 1;
  cfg.length = T;
  cfg.nig = {p.m, p.lambda, p.a, p.b};
  return sample_synthetic_episode(cfg, rng);
}

}  // namespace

TEST(LabelPosterior, EmptyStateForcesNewClass) {
  ClusterState s(std::make_shared<NigFamily>(NigHyper{}), 1.0);
  EXPECT_EQ(label_posterior(s, std::vector<double>{0.3}), std::vector<double>{1.0});
}

TEST(LabelPosterior, MatchesCrpTimesPredictive) {
  auto f = std::make_shared<NigFamily>(NigHyper{0.0, 0.5, 2.0, 1.0});
  ClusterState s(f, 0.7);
  s.assign(1, std::vector<double>{0.1});
  s.assign(2, std::vector<double>{3.0});
  s.assign(1, std::vector<double>{-0.2});
  const double x = 0.5;
  // Class 1 holds {0.1, -0.2}, class 2 holds {3.0}; counts 2, 1; total 3.
  const oracle::Nig p{0.0, 0.5, 2.0, 1.0};
  auto pred = [&](std::vector<double> xs) {
    auto with = xs;
    with.push_back(x);
    return std::exp(oracle::nig_log_marginal(with, p) - oracle::nig_log_marginal(xs, p));
  };
  std::vector<double> w{2.0 / 3.7 * pred({0.1, -0.2}), 1.0 / 3.7 * pred({3.0}), 0.7 / 3.7 * pred({})};
  const double z = w[0] + w[1] + w[2];
  const auto got = label_posterior(s, std::vector<double>{x});
  ASSERT_EQ(got.size(), 3u);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(got[k], w[k] / z, 1e-12);
  EXPECT_NEAR(std::accumulate(got.begin(), got.end(), 0.0), 1.0, 1e-12);
}

TEST(LabelPosterior, ConcentratesAsHistoryGrows) {
  auto f = std::make_shared<NigFamily>(NigHyper{0.0, 0.01, 2.0, 2.0});
  ClusterState s(f, 0.1);
  const std::vector<double> x{1.5};
  double prev = 0.0;
  for (int n = 1; n <= 64; ++n) {
    s.assign(1, x);
    const double p1 = label_posterior(s, x)[0];
    EXPECT_GE(p1, prev);
    prev = p1;
  }
  EXPECT_GT(prev, 0.999);
}

TEST(LabelPosterior, SymmetricStateGivesEqualProbabilities) {
  auto f = std::make_shared<NigFamily>(NigHyper{0.0, 1.0, 2.0, 1.0});
  ClusterState s(f, 1.0);
  s.assign(1, std::vector<double>{-2.0});
  s.assign(2, std::vector<double>{2.0});
  const auto p = label_posterior(s, std::vector<double>{0.0});
  EXPECT_NEAR(p[0], p[1], 1e-14);
}

TEST(LabelPosterior, DimensionMismatchThrows) {
  ClusterState s(std::make_shared<NigFamily>(NigHyper{}), 1.0);
  EXPECT_THROW(label_posterior(s, std::vector<double>{1.0, 2.0}), DataError);
}

TEST(ExactNll, SingleStepIsZero) {
  auto f = std::make_shared<NigFamily>(NigHyper{});
  EXPECT_EQ(exact_sequential_nll(one_dim_episode({1}, {4.2}), f, 1.0), 0.0);
}

TEST(ExactNll, FlatLikelihoodReducesToCrpBaseline) {
  auto f = std::make_shared<FlatFamily>();
  RngStream rng(3);
  for (int i = 0; i < 20; ++i) {
    auto z = crp_sample(1.0, 60, rng);
    std::vector<double> xs(z.size());
    for (auto& x : xs) x = rng.normal();
    EXPECT_NEAR(exact_sequential_nll(one_dim_episode(z, xs), f, 1.0), crp_baseline_nll(z, 1.0), 1e-12);
  }
}

TEST(ExactNll, MatchesRatioOfJointsOracle) {
  const oracle::Nig p{0.0, 0.1, 2.0, 2.0};
  auto f = std::make_shared<NigFamily>(NigHyper{p.m, p.lambda, p.a, p.b});
  RngStream rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Episode e = random_small_episode(rng, 1 + rng.uniform_index(8), p);
    const auto got = exact_sequential_log_probs(e, f, 1.0);
    const auto want = oracle::sequential_log_probs_by_joints(e.labels, e.data, p, 1.0);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t t = 0; t < got.size(); ++t) EXPECT_NEAR(got[t], want[t], 1e-9);
    const double nll = -std::accumulate(want.begin(), want.end(), 0.0) / static_cast<double>(want.size());
    EXPECT_NEAR(exact_sequential_nll(e, f, 1.0), nll, 1e-9);
  }
}

TEST(ParticleEnsemble, UniformWeightsEss) {
  auto f = std::make_shared<NigFamily>(NigHyper{});
  ParticleEnsemble ens;
  for (int j = 0; j < 100; ++j) ens.particles.push_back({{}, ClusterState(f, 1.0), -3.0});
  ens.normalize();
  EXPECT_NEAR(ens.ess(), 100.0, 1e-9);
  const auto w = ens.weights();
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
}

TEST(ParticleFilter, NoResamplingWhenIncrementsAreEqual) {
  // With a flat likelihood every particle's normaliser is 1, so weights stay
  // uniform and ESS stays at J.
  PfOptions opt{100, 50.0};
  RngStream rng(5);
  const PfResult r = pf_run(one_dim_episode({1, 1, 2, 1, 3}, {0, 0, 0, 0, 0}), std::make_shared<FlatFamily>(), 1.0, opt, rng);
  EXPECT_EQ(r.resample_events, 0u);
  EXPECT_NEAR(r.ensemble.ess(), 100.0, 1e-9);
  EXPECT_NEAR(r.log_marginal(), 0.0, 1e-12);
}

TEST(ParticleFilter, SingleParticleIsGreedyPath) {
  auto f = std::make_shared<NigFamily>(NigHyper{0.0, 0.01, 2.0, 2.0});
  SyntheticConfig cfg;
  cfg.dim = 1;
  cfg.length = 30;
  RngStream g(6);
  const Episode e = sample_synthetic_episode(cfg, g);
  RngStream rng(7);
  const PfResult r = pf_run(e, f, 1.0, {1, 1.0}, rng);
  ASSERT_EQ(r.ensemble.size(), 1u);
  EXPECT_NEAR(r.ensemble.weights()[0], 1.0, 1e-12);
  EXPECT_FALSE(validate_labels(r.ensemble.particles[0].trajectory).has_value());
  RngStream rng2(7);
  EXPECT_EQ(pf_map_labels(e, f, 1.0, {1, 1.0}, rng2), r.ensemble.particles[0].trajectory);
}

TEST(ParticleFilter, WeightsNormalisedAfterEveryStep) {
  auto f = std::make_shared<NigFamily>(NigHyper{0.0, 0.01, 2.0, 2.0});
  SyntheticConfig cfg;
  cfg.dim = 1;
  cfg.length = 25;
  RngStream g(8);
  const Episode full = sample_synthetic_episode(cfg, g);
  for (std::size_t T = 1; T <= full.length(); ++T) {
    Episode prefix(std::vector<int>(full.labels.begin(), full.labels.begin() + T), 1,
                   std::vector<double>(full.data.begin(), full.data.begin() + T));
    RngStream rng(9);
    const PfResult r = pf_run(prefix, f, 1.0, {50, 25.0}, rng);
    const auto w = r.ensemble.weights();
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-9);
    for (const auto& p : r.ensemble.particles) {
      EXPECT_EQ(p.trajectory.size(), T);
      EXPECT_EQ(p.clusters.total(), static_cast<int>(T));
    }
  }
}

TEST(ParticleFilter, LogMarginalMatchesEnumeration) {
  const oracle::Nig p{0.0, 0.1, 2.0, 2.0};
  auto f = std::make_shared<NigFamily>(NigHyper{p.m, p.lambda, p.a, p.b});
  RngStream rng(10);
  for (int trial = 0; trial < 8; ++trial) {
    const Episode e = random_small_episode(rng, 3 + rng.uniform_index(4), p);
    RngStream pr = rng.split(trial);
    const PfResult r = pf_run(e, f, 1.0, {4000, 2000.0}, pr);
    EXPECT_NEAR(r.log_marginal(), oracle::log_marginal_enumerated(e.data, p, 1.0), 0.05);
  }
}

TEST(ParticleFilter, RejectsBadOptions) {
  auto f = std::make_shared<NigFamily>(NigHyper{});
  RngStream rng(1);
  const Episode e = one_dim_episode({1}, {0.0});
  EXPECT_THROW(pf_run(e, f, 1.0, {0, 0.0}, rng), std::invalid_argument);
  EXPECT_THROW(pf_run(e, f, 1.0, {10, 11.0}, rng), std::invalid_argument);
}

TEST(ParticleFilter, DeterministicForSeed) {
  auto f = std::make_shared<NigFamily>(NigHyper{0.0, 0.01, 2.0, 2.0});
  SyntheticConfig cfg;
  RngStream g(11);
  cfg.dim = 1;
  const Episode e = sample_synthetic_episode(cfg, g);
  RngStream a(12), b(12);
  const PfResult ra = pf_run(e, f, 1.0, {100, 50.0}, a), rb = pf_run(e, f, 1.0, {100, 50.0}, b);
  EXPECT_EQ(ra.log_marginal_increments, rb.log_marginal_increments);
  for (std::size_t j = 0; j < ra.ensemble.size(); ++j)
    EXPECT_EQ(ra.ensemble.particles[j].trajectory, rb.ensemble.particles[j].trajectory);
}

TEST(Resampling, UnbiasedForTestFunction) {
  // Particles carry f = number of classes in a one-step trajectory; the
  // post-resampling uniform average must match the pre-resampling weighted
  // average in expectation.
  auto fam = std::make_shared<NigFamily>(NigHyper{});
  const std::vector<double> logw{0.0, -1.0, -0.3, -2.5, 0.7, -0.1};
  ParticleEnsemble base;
  for (std::size_t j = 0; j < logw.size(); ++j) {
    Particle p{std::vector<int>(j + 1, 1), ClusterState(fam, 1.0), logw[j]};
    base.particles.push_back(std::move(p));
  }
  base.normalize();
  const auto w = base.weights();
  double target = 0.0, fvar = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) target += w[j] * (j + 1.0);
  for (std::size_t j = 0; j < w.size(); ++j) fvar += w[j] * (j + 1.0 - target) * (j + 1.0 - target);

  RngStream rng(13);
  const int trials = 10000;
  double sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    ParticleEnsemble e = base;
    multinomial_resample(e, rng);
    const auto we = e.weights();
    double est = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) {
      EXPECT_NEAR(we[j], 1.0 / 6.0, 1e-12);
      est += we[j] * static_cast<double>(e.particles[j].trajectory.size());
    }
    sum += est;
  }
  const double se = std::sqrt(fvar / 6.0 / trials);
  EXPECT_NEAR(sum / trials, target, 3 * se);
}

TEST(PfMap, RecoversWellSeparatedClusters) {
  auto f = std::make_shared<NigFamily>(NigHyper{0.0, 0.01, 2.0, 0.02});
  RngStream rng(14);
  double total = 0.0;
  const int n = 20;
  for (int i = 0; i < n; ++i) {
    // Two clusters at -5 and +5 with sd 0.1.
    std::vector<int> raw;
    std::vector<double> xs;
    for (int t = 0; t < 40; ++t) {
      const int c = rng.bernoulli(0.5) ? 1 : 2;
      raw.push_back(c);
      xs.push_back((c == 1 ? -5.0 : 5.0) + 0.1 * rng.normal());
    }
    const auto z = canonicalize_labels(raw);
    const auto m = pf_map_labels(one_dim_episode(z, xs), f, 1.0, {100, 50.0}, rng);
    EXPECT_FALSE(validate_labels(m).has_value());
    total += ari(z, m);
  }
  EXPECT_GE(total / n, 0.9);
}
