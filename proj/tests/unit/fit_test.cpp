#include <gtest/gtest.h>

#include <cmath>

#include "dpnc/error.hpp"
#include "dpnc/fit.hpp"
#include "dpnc/pfilter.hpp"
#include "dpnc/simgen.hpp"

using namespace dpnc;

namespace {

std::vector<Episode> draw(const EpisodeSource& src, std::size_t n, std::uint64_t seed) {
  RngStream root(seed);
  std::vector<Episode> out;
  for (std::size_t i = 0; i < n; ++i) {
    RngStream r = root.split(i);
    out.push_back(src(r));
  }
  return out;
}

EpisodeSource hurdle_bank_source() {
  SparseBankConfig bc;
  bc.classes = 30;
  bc.items = 40;
  bc.dim = 3;
  bc.seed = 5;
  return bank_source(std::make_shared<const FeatureBank>(make_sparse_bank(bc)), 1.0, 30);
}

}  // namespace

TEST(FitConfig, Validation) {
  FitConfig c;
  c.batch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = FitConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FitGradient, MatchesFiniteDifferencesOfFullObjective) {
  const auto episodes = draw(hurdle_bank_source(), 3, 1);
  FamilyPtr fam = family_from_json({{"dims", nlohmann::json::array({{{"family", "hurdle"}, {"m", 0.2}},
                                                                    {{"family", "nig"}, {"lambda", 0.3}},
                                                                    {{"family", "hurdle"}, {"beta_a", 2.0}}})}});
  const double alpha = 1.0;
  for (const auto& e : episodes) {
    std::vector<double> grad;
    const double nll = exact_nll_and_gradient(e, fam, alpha, 1e-4, grad);
    EXPECT_NEAR(nll, exact_sequential_nll(e, fam, alpha), 1e-12);
    auto p = fam->prior_params();
    ASSERT_EQ(grad.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(p[i]));
      auto up = p, dn = p;
      up[i] += h;
      dn[i] -= h;
      const double numeric = (exact_sequential_nll(e, fam->with_prior_params(up), alpha) -
                              exact_sequential_nll(e, fam->with_prior_params(dn), alpha)) /
                             (2 * h);
      EXPECT_NEAR(grad[i], numeric, 1e-6 + 1e-4 * std::abs(numeric)) << "parameter " << i;
    }
  }
}

TEST(FitHyper, ZeroStepsReturnsTemplate) {
  SyntheticConfig sc;
  auto fam = family_from_json({{"family", "nig"}, {"dims", 2}, {"lambda", 0.5}});
  FitConfig cfg;
  cfg.steps = 0;
  cfg.eval_episodes = 8;
  const FitResult r = fit_hyperparameters(synthetic_source(sc), fam, 1.0, cfg);
  EXPECT_EQ(r.family->prior_params(), fam->prior_params());
  EXPECT_EQ(r.best_step, 0u);
  EXPECT_EQ(r.best_eval_nll, r.initial_eval_nll);
}

TEST(FitHyper, BestSeenIsNonIncreasingAndConsistent) {
  SyntheticConfig sc;
  sc.length = 40;
  auto fam = family_from_json({{"family", "nig"}, {"dims", 2}, {"lambda", 1.0}, {"a", 1.0}, {"b", 1.0}});
  FitConfig cfg;
  cfg.steps = 30;
  cfg.batch = 8;
  cfg.eval_every = 5;
  cfg.eval_episodes = 32;
  const FitResult r = fit_hyperparameters(synthetic_source(sc), fam, 1.0, cfg);
  ASSERT_EQ(r.history.size(), 30u);
  double best = r.initial_eval_nll;
  for (const auto& rec : r.history)
    if (!std::isnan(rec.eval_nll)) best = std::min(best, rec.eval_nll);
  EXPECT_DOUBLE_EQ(r.best_eval_nll, best);
  EXPECT_LE(r.best_eval_nll, r.initial_eval_nll);
}

TEST(FitHyper, Deterministic) {
  SyntheticConfig sc;
  sc.length = 20;
  auto fam = family_from_json({{"family", "nig"}, {"dims", 2}});
  FitConfig cfg;
  cfg.steps = 5;
  cfg.batch = 4;
  cfg.eval_every = 2;
  cfg.eval_episodes = 8;
  const FitResult a = fit_hyperparameters(synthetic_source(sc), fam, 1.0, cfg);
  const FitResult b = fit_hyperparameters(synthetic_source(sc), fam, 1.0, cfg);
  EXPECT_EQ(a.family->prior_params(), b.family->prior_params());
  EXPECT_EQ(a.best_eval_nll, b.best_eval_nll);
}

TEST(FitHyper, SelfConsistentOnKnownPriorData) {
  // Data from the synthetic prior; fitting from a misspecified start should
  // land within 0.01 nats of the true prior on held-out episodes.
  SyntheticConfig sc;
  const EpisodeSource src = synthetic_source(sc);
  auto truth = family_from_json({{"family", "nig"}, {"dims", 2}, {"m", 0.0}, {"lambda", 0.01}, {"a", 2.0}, {"b", 2.0}});
  auto start = family_from_json({{"family", "nig"}, {"dims", 2}, {"m", 1.0}, {"lambda", 0.1}, {"a", 4.0}, {"b", 0.5}});
  FitConfig cfg;
  cfg.steps = 300;
  cfg.batch = 32;
  cfg.eval_every = 50;
  cfg.eval_episodes = 128;
  const FitResult r = fit_hyperparameters(src, start, 1.0, cfg);

  const auto held_out = draw(src, 1000, 777);
  const double nll_true = mean_exact_nll(held_out, truth, 1.0);
  const double nll_fit = mean_exact_nll(held_out, r.family, 1.0);
  const double nll_start = mean_exact_nll(held_out, start, 1.0);
  EXPECT_LT(nll_fit, nll_start);
  EXPECT_LT(nll_fit - nll_true, 0.01) << "true " << nll_true << " fitted " << nll_fit << " start " << nll_start;
}

TEST(FixedSource, DrawsFromList) {
  std::vector<Episode> es{Episode({1}, 1, {0.5}), Episode({1, 2}, 1, {0.1, 0.2})};
  auto src = fixed_episode_source(es);
  RngStream rng(1);
  for (int i = 0; i < 20; ++i) {
    const Episode e = src(rng);
    EXPECT_TRUE(e == es[0] || e == es[1]);
  }
}
