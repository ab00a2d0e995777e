#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

#include "dpnc/error.hpp"
#include "dpnc/expfam.hpp"
#include "dpnc/rng.hpp"
#include "dpnc/special.hpp"

using namespace dpnc;

namespace {

double lp1(const Family& f, const HyperParams& h, double x) { return f.log_predictive(h, std::vector<double>{x}); }

// Integral of g over the real line via x = c + s tan(theta) and composite
// Simpson on theta, which handles polynomial tails.
double integrate_real_line(const std::function<double(double)>& g, double c, double s, int n = 40000) {
  const double lo = -std::numbers::pi / 2, hi = std::numbers::pi / 2;
  const double step = (hi - lo) / n;
  double total = 0.0;
  for (int i = 1; i < n; ++i) {
    const double th = lo + i * step;
    const double x = c + s * std::tan(th);
    const double w = (i % 2 == 1) ? 4.0 : 2.0;
    total += w * g(x) * s / (std::cos(th) * std::cos(th));
  }
  return total * step / 3.0;
}

// Closed-form normal-inverse-gamma posterior for 1-d data.
NigHyper nig_posterior(NigHyper p, const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  if (xs.empty()) return p;
  double mean = 0.0;
  for (double x : xs) mean += x / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  NigHyper q;
  q.lambda = p.lambda + n;
  q.m = (p.lambda * p.m + n * mean) / q.lambda;
  q.a = p.a + n / 2;
  q.b = p.b + ss / 2 + p.lambda * n * (mean - p.m) * (mean - p.m) / (2 * q.lambda);
  return q;
}

NigHyper random_nig(RngStream& rng) {
  return {rng.normal(0.0, 2.0), 0.05 + 3 * rng.uniform(), 1.0 + 4 * rng.uniform(), 0.1 + 3 * rng.uniform()};
}

}  // namespace

TEST(Special, LogGammaMatchesStdLgamma) {
  for (double x = 0.01; x < 300.0; x *= 1.07) {
    const double ref = std::lgamma(x);
    EXPECT_NEAR(log_gamma(x), ref, 1e-12 * std::max(1.0, std::abs(ref))) << x;
  }
}

TEST(Special, StudentTAgainstDirectFormula) {
  for (double df : {0.5, 2.0, 7.3, 60.0})
    for (double x : {-3.0, 0.0, 1.7}) {
      const double loc = 0.4, s2 = 2.2;
      const double z = (x - loc) * (x - loc) / (df * s2);
      const double ref = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * std::numbers::pi * s2) -
                         (df + 1) / 2 * std::log1p(z);
      EXPECT_NEAR(student_t_logpdf(x, df, loc, s2), ref, 1e-11);
    }
}

TEST(Special, LogSumExp) {
  EXPECT_EQ(log_sum_exp(std::vector<double>{}), -std::numeric_limits<double>::infinity());
  EXPECT_NEAR(log_sum_exp(std::vector<double>{1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-12);
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_EQ(log_sum_exp(std::vector<double>{ninf, ninf}), ninf);
}

TEST(Nig, UpdateExample) {
  NigFamily f({0.0, 1.0, 1.0, 1.0});
  const HyperParams h = f.posterior_update(f.prior(), std::vector<double>{0.0});
  const NigHyper q = NigFamily::from_natural(h.tau);
  EXPECT_NEAR(q.lambda, 2.0, 1e-15);
  EXPECT_NEAR(q.m, 0.0, 1e-15);
  EXPECT_NEAR(q.a, 1.5, 1e-15);
  EXPECT_NEAR(q.b, 1.0, 1e-15);
  EXPECT_EQ(h.nu, 1.0);
}

TEST(Nig, UpdateMatchesClosedFormPosterior) {
  RngStream rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const NigHyper p = random_nig(rng);
    NigFamily f(p);
    std::vector<double> xs(1 + rng.uniform_index(30));
    for (auto& x : xs) x = rng.normal(1.0, 3.0);
    HyperParams h = f.prior();
    for (double x : xs) h = f.posterior_update(h, std::vector<double>{x});
    const NigHyper got = NigFamily::from_natural(h.tau), want = nig_posterior(p, xs);
    EXPECT_NEAR(got.m, want.m, 1e-9 * std::max(1.0, std::abs(want.m)));
    EXPECT_NEAR(got.lambda, want.lambda, 1e-9 * want.lambda);
    EXPECT_NEAR(got.a, want.a, 1e-9 * want.a);
    EXPECT_NEAR(got.b, want.b, 1e-8 * want.b);
  }
}

TEST(Nig, EmptyUpdateIsIdentity) {
  NigFamily f({0.3, 2.0, 1.5, 0.7});
  EXPECT_EQ(f.posterior_update_batch(f.prior(), {}, 0), f.prior());
}

TEST(Nig, PredictiveExampleIsQuarter) {
  NigFamily f({0.0, 1.0, 1.0, 1.0});
  EXPECT_NEAR(lp1(f, f.prior(), 0.0), std::log(0.25), 1e-12);
}

TEST(Nig, PredictiveMatchesNumericalIntegrationOverPrior) {
  // p(x) = int N(x | mu, s2) N(mu | m, s2 / lambda) IG(s2 | a, b) dmu ds2.
  // The mu integral is a Gaussian convolution; s2 is integrated numerically
  // in log space.
  RngStream rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const NigHyper p = random_nig(rng);
    NigFamily f(p);
    const double x = rng.normal(p.m, 2.0);
    const int n = 20000;
    const double lo = -25.0, hi = 25.0, step = (hi - lo) / n;
    double total = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double u = lo + i * step;  // u = log s2
      const double s2 = std::exp(u);
      const double log_ig = p.a * std::log(p.b) - std::lgamma(p.a) - (p.a + 1) * u - p.b / s2;
      const double var = s2 * (1 + 1 / p.lambda);
      const double log_n = -0.5 * std::log(2 * std::numbers::pi * var) - (x - p.m) * (x - p.m) / (2 * var);
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      total += w * std::exp(log_ig + log_n + u);
    }
    total *= step / 3.0;
    EXPECT_NEAR(lp1(f, f.prior(), x), std::log(total), 1e-7);
  }
}

TEST(Nig, PredictiveMatchesMonteCarloOverPrior) {
  NigHyper p{0.5, 0.3, 2.5, 1.2};
  NigFamily f(p);
  RngStream rng(31);
  const double x = 1.1;
  const int n = 400000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s2 = rng.inverse_gamma(p.a, p.b);
    const double mu = rng.normal(p.m, std::sqrt(s2 / p.lambda));
    const double d = std::exp(-(x - mu) * (x - mu) / (2 * s2)) / std::sqrt(2 * std::numbers::pi * s2);
    s += d;
    ss += d * d;
  }
  const double mean = s / n, se = std::sqrt((ss / n - mean * mean) / n);
  EXPECT_NEAR(std::exp(lp1(f, f.prior(), x)), mean, 3 * se);
}

TEST(Nig, PredictiveNormalises) {
  RngStream rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    NigFamily f(random_nig(rng));
    HyperParams h = f.prior();
    for (std::size_t i = 0; i < rng.uniform_index(5); ++i) h = f.posterior_update(h, std::vector<double>{rng.normal()});
    const NigHyper q = NigFamily::from_natural(h.tau);
    const double mass = integrate_real_line([&](double x) { return std::exp(lp1(f, h, x)); }, q.m, 1.0);
    EXPECT_NEAR(mass, 1.0, 1e-4);
  }
}

TEST(Nig, InadmissibleHyperRejected) {
  NigFamily f({0.0, 1.0, 1.0, 1.0});
  HyperParams h = f.prior();
  h.tau[3] = -1.0;  // lambda
  EXPECT_THROW(lp1(f, h, 0.0), DataError);
  EXPECT_THROW(NigFamily({0.0, 0.0, 1.0, 1.0}), ConfigError);
}

TEST(Nig, PriorParamsRoundTrip) {
  NigFamily f({0.3, 0.02, 2.0, 5.0});
  const auto p = f.prior_params();
  const auto g = f.with_prior_params(p);
  EXPECT_EQ(g->prior_params(), p);
  EXPECT_NEAR(lp1(*g, g->prior(), 0.7), lp1(f, f.prior(), 0.7), 1e-14);
}

TEST(BetaBernoulli, UpdateAndPredictive) {
  BetaBernoulliFamily f({1.0, 1.0});
  const HyperParams h = f.posterior_update(f.prior(), std::vector<double>{1.0});
  EXPECT_EQ(h.tau, (std::vector<double>{2.0, 1.0}));
  EXPECT_NEAR(lp1(f, f.prior(), 1.0), std::log(0.5), 1e-15);
  EXPECT_NEAR(lp1(f, h, 1.0), std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(std::exp(lp1(f, h, 0.0)) + std::exp(lp1(f, h, 1.0)), 1.0, 1e-15);
  EXPECT_THROW(lp1(f, h, 0.5), DataError);
}

TEST(Hurdle, ZeroMassUnderSymmetricGate) {
  auto f = hurdle_compose(std::make_shared<NigFamily>(NigHyper{0.0, 1.0, 2.0, 1.0}), {1.0, 1.0});
  EXPECT_NEAR(lp1(*f, f->prior(), 0.0), std::log(0.5), 1e-15);
}

TEST(Hurdle, GatedUpdates) {
  auto base = std::make_shared<NigFamily>(NigHyper{0.0, 1.0, 2.0, 1.0});
  auto f = hurdle_compose(base, {1.5, 2.5});
  const HyperParams prior = f->prior();

  const HyperParams z = f->posterior_update(prior, std::vector<double>{0.0});
  EXPECT_EQ(z.tau[0], 1.5);
  EXPECT_EQ(z.tau[1], 3.5);
  EXPECT_TRUE(std::equal(prior.tau.begin() + 2, prior.tau.end(), z.tau.begin() + 2));

  const HyperParams e = f->posterior_update(prior, std::vector<double>{std::numbers::e});
  EXPECT_EQ(e.tau[0], 2.5);
  EXPECT_EQ(e.tau[1], 2.5);
  const HyperParams b = base->posterior_update(base->prior(), std::vector<double>{1.0});
  for (std::size_t k = 0; k < b.tau.size(); ++k) EXPECT_NEAR(e.tau[2 + k], b.tau[k], 1e-15);
}

TEST(Hurdle, PredictiveFormula) {
  auto base = std::make_shared<NigFamily>(NigHyper{0.2, 0.5, 3.0, 2.0});
  auto f = hurdle_compose(base, {2.0, 3.0});
  const double x = 1.7;
  const double want = std::log(2.0 / 5.0) + lp1(*base, base->prior(), std::log(x)) - std::log(x);
  EXPECT_NEAR(lp1(*f, f->prior(), x), want, 1e-12);
  EXPECT_NEAR(lp1(*f, f->prior(), 0.0), std::log(3.0 / 5.0), 1e-15);
  EXPECT_THROW(lp1(*f, f->prior(), -0.1), DataError);
}

TEST(Hurdle, PredictiveMassIsOne) {
  RngStream rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    auto f = hurdle_compose(std::make_shared<NigFamily>(random_nig(rng)), {0.5 + rng.uniform() * 3, 0.5 + rng.uniform()});
    HyperParams h = f->prior();
    for (int i = 0; i < 4; ++i) {
      const double x = rng.bernoulli(0.4) ? 0.0 : std::exp(rng.normal());
      h = f->posterior_update(h, std::vector<double>{x});
    }
    const double p0 = std::exp(lp1(*f, h, 0.0));
    // int_0^inf p(x) dx = int p(e^y) e^y dy.
    // Beyond |y| = 700 exp(y) leaves double range; the Student-t tail there is negligible.
    const double cont = integrate_real_line(
        [&](double y) { return std::abs(y) > 700 ? 0.0 : std::exp(lp1(*f, h, std::exp(y)) + y); }, 0.0, 1.0);
    EXPECT_NEAR(p0 + cont, 1.0, 1e-6);
  }
}

TEST(Hurdle, ReducesToBetaBernoulliOnTwoPointData) {
  auto base = std::make_shared<NigFamily>(NigHyper{0.0, 1.0, 2.0, 1.0});
  auto hurdle = hurdle_compose(base, {1.2, 0.8});
  BetaBernoulliFamily bb({1.2, 0.8});
  const double c = 2.5;
  RngStream rng(4);
  HyperParams hh = hurdle->prior(), hb = bb.prior(), hbase = base->prior();
  for (int t = 0; t < 30; ++t) {
    EXPECT_NEAR(lp1(*hurdle, hh, 0.0), lp1(bb, hb, 0.0), 1e-12);
    const double shift = lp1(*base, hbase, std::log(c)) - std::log(c);
    EXPECT_NEAR(lp1(*hurdle, hh, c) - shift, lp1(bb, hb, 1.0), 1e-12);
    const bool nz = rng.bernoulli(0.5);
    hh = hurdle->posterior_update(hh, std::vector<double>{nz ? c : 0.0});
    hb = bb.posterior_update(hb, std::vector<double>{nz ? 1.0 : 0.0});
    if (nz) hbase = base->posterior_update(hbase, std::vector<double>{std::log(c)});
  }
}

TEST(Product, AdditiveOverDimensions) {
  auto nig = std::make_shared<NigFamily>(NigHyper{0.0, 1.0, 1.0, 1.0});
  auto three = product_family({nig, nig, nig});
  EXPECT_NEAR(three->log_predictive(three->prior(), std::vector<double>{0, 0, 0}), 3 * std::log(0.25), 1e-12);

  auto hurdle = hurdle_compose(std::make_shared<NigFamily>(NigHyper{1.0, 0.5, 2.0, 2.0}), {1.0, 2.0});
  auto mixed = product_family({nig, hurdle});
  const std::vector<double> x{0.3, 1.9};
  EXPECT_NEAR(mixed->log_predictive(mixed->prior(), x),
              lp1(*nig, nig->prior(), 0.3) + lp1(*hurdle, hurdle->prior(), 1.9), 1e-12);
  EXPECT_EQ(mixed->posterior_update_batch(mixed->prior(), {}, 0), mixed->prior());
  EXPECT_THROW(mixed->log_predictive(mixed->prior(), std::vector<double>{0.3}), DataError);
}

TEST(Product, UpdateAppliesPerDimension) {
  auto a = std::make_shared<NigFamily>(NigHyper{0.0, 1.0, 1.0, 1.0});
  auto b = std::make_shared<BetaBernoulliFamily>(BetaHyper{1.0, 1.0});
  auto f = product_family({a, b});
  const HyperParams h = f->posterior_update(f->prior(), std::vector<double>{2.0, 1.0});
  const HyperParams ha = a->posterior_update(a->prior(), std::vector<double>{2.0});
  const HyperParams hb = b->posterior_update(b->prior(), std::vector<double>{1.0});
  std::vector<double> want = ha.tau;
  want.insert(want.end(), hb.tau.begin(), hb.tau.end());
  EXPECT_EQ(h.tau, want);
}

TEST(Product, BatchEqualsIncrementalInAnyOrder) {
  auto f = family_from_json({{"family", "hurdle"}, {"dims", 3}});
  RngStream rng(6);
  const std::size_t n = 40;
  std::vector<double> rows(n * 3);
  for (auto& v : rows) v = rng.bernoulli(0.3) ? 0.0 : std::exp(rng.normal());
  const HyperParams batch = f->posterior_update_batch(f->prior(), rows, n);
  for (int perm = 0; perm < 5; ++perm) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
    HyperParams h = f->prior();
    for (std::size_t i : order) h = f->posterior_update(h, std::span<const double>(rows).subspan(i * 3, 3));
    EXPECT_EQ(h.nu, batch.nu);
    for (std::size_t k = 0; k < h.tau.size(); ++k) EXPECT_NEAR(h.tau[k], batch.tau[k], 1e-9 * std::max(1.0, std::abs(batch.tau[k])));
    // Gate counts are exact.
    for (std::size_t d = 0; d < 3; ++d) {
      const std::size_t off = f->tau_offset(d);
      EXPECT_EQ(h.tau[off], batch.tau[off]);
      EXPECT_EQ(h.tau[off + 1], batch.tau[off + 1]);
    }
  }
}

TEST(FamilyJson, ParsesAndRoundTrips) {
  const nlohmann::json j = {{"dims", nlohmann::json::array({{{"family", "nig"}, {"m", 0.5}, {"lambda", 0.1}, {"a", 2}, {"b", 3}},
                                                          {{"family", "hurdle"}, {"beta_a", 2}, {"beta_b", 1}},
                                                          {{"family", "beta_bernoulli"}}})}};
  auto f = family_from_json(j);
  EXPECT_EQ(f->dim(), 3u);
  auto g = family_from_json(f->to_json());
  const std::vector<double> x{0.2, 1.5, 1.0};
  EXPECT_DOUBLE_EQ(f->log_predictive(f->prior(), x), g->log_predictive(g->prior(), x));
  EXPECT_EQ(f->prior_params(), g->prior_params());
}

TEST(FamilyJson, RejectsBadBlocks) {
  EXPECT_THROW(family_from_json({{"family", "poisson"}, {"dims", 2}}), ConfigError);
  EXPECT_THROW(family_from_json({{"family", "nig"}}), ConfigError);
  EXPECT_THROW(family_from_json({{"family", "nig"}, {"dims", 0}}), ConfigError);
  EXPECT_THROW(family_from_json({{"family", "nig"}, {"dims", 1}, {"lambda", -1}}), ConfigError);
}

TEST(FamilyParams, ProductRoundTripAndOffsets) {
  auto f = family_from_json({{"family", "hurdle"}, {"dims", 2}, {"m", 0.5}});
  auto p = f->prior_params();
  for (auto& v : p) v += 0.1;
  auto g = f->with_prior_params(p);
  const auto back = g->prior_params();
  ASSERT_EQ(back.size(), p.size());
  // Positive parameters pass through exp and log.
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(back[i], p[i], 1e-12);
  EXPECT_THROW(f->with_prior_params(std::vector<double>{1.0}), ConfigError);
}
