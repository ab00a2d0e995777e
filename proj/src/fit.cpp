#include "dpnc/fit.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "dpnc/adam.hpp"
#include "dpnc/error.hpp"
#include "dpnc/pfilter.hpp"
#include "dpnc/rng.hpp"
#include "dpnc/special.hpp"

namespace dpnc {

void FitConfig::validate() const {
  if (batch < 1) throw ConfigError("fit: batch must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("fit: lr must be positive");
  if (eval_every < 1) throw ConfigError("fit: eval_every must be at least 1");
  if (eval_episodes < 1) throw ConfigError("fit: eval_episodes must be at least 1");
  if (!(fd_step > 0.0)) throw ConfigError("fit: fd_step must be positive");
}

namespace {

struct Block {
  FamilyPtr family;
  std::size_t x_offset;
  std::size_t param_offset;
};

std::vector<Block> blocks_of(const FamilyPtr& family) {
  std::vector<Block> out;
  if (auto prod = std::dynamic_pointer_cast<const ProductFamily>(family)) {
    for (std::size_t i = 0; i < prod->num_components(); ++i)
      out.push_back({prod->component(i), prod->x_offset(i), prod->param_offset(i)});
  } else {
    out.push_back({family, 0, 0});
  }
  return out;
}

// Predictive log-densities of every candidate class at every step, following
// the true labels: table[row(t) + k] for k = 0..K_t (K_t = classes before t).
void replay_predictive(const Family& f, const Episode& e, std::size_t x_offset, std::vector<double>& table) {
  const std::size_t S = f.stat_size(), C = f.compiled_size(), d = f.dim();
  const HyperParams prior = f.prior();
  std::vector<double> prior_c(C);
  f.compile(prior.tau, prior.nu, prior_c);
  std::vector<double> tau, compiled, t(S);
  std::vector<int> counts;
  table.clear();
  for (std::size_t s = 0; s < e.length(); ++s) {
    const auto x = e.x(s).subspan(x_offset, d);
    const std::size_t K = counts.size();
    for (std::size_t k = 0; k < K; ++k)
      table.push_back(f.log_predictive_compiled(std::span<const double>(compiled.data() + k * C, C), x));
    table.push_back(f.log_predictive_compiled(prior_c, x));
    const auto z = static_cast<std::size_t>(e.labels[s] - 1);
    if (z == K) {
      counts.push_back(0);
      tau.insert(tau.end(), prior.tau.begin(), prior.tau.end());
      compiled.resize(compiled.size() + C);
    }
    f.suff_stats(x, t);
    for (std::size_t i = 0; i < S; ++i) tau[z * S + i] += t[i];
    ++counts[z];
    f.compile(std::span<const double>(tau.data() + z * S, S), prior.nu + counts[z],
              std::span<double>(compiled.data() + z * C, C));
  }
}

}  // namespace

double exact_nll_and_gradient(const Episode& e, const FamilyPtr& family, double alpha, double fd_step,
                              std::vector<double>& grad) {
  const std::size_t T = e.length();
  const auto params = family->prior_params();
  grad.assign(params.size(), 0.0);

  // Label posteriors along the true path with the full model.
  ClusterState clusters(family, alpha);
  std::vector<double> pi, lj;
  std::vector<std::size_t> row(T);
  double nll = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto x = e.x(t);
    clusters.log_joint(x, lj);
    const double lse = log_sum_exp(lj);
    row[t] = pi.size();
    for (double v : lj) pi.push_back(std::exp(v - lse));
    nll -= lj[static_cast<std::size_t>(e.labels[t] - 1)] - lse;
    clusters.assign(e.labels[t], x);
  }
  nll /= static_cast<double>(T);

  std::vector<double> up, down;
  for (const Block& b : blocks_of(family)) {
    auto local = b.family->prior_params();
    for (std::size_t p = 0; p < local.size(); ++p) {
      const double h = fd_step * std::max(1.0, std::abs(local[p]));
      const double saved = local[p];
      local[p] = saved + h;
      replay_predictive(*b.family->with_prior_params(local), e, b.x_offset, up);
      local[p] = saved - h;
      replay_predictive(*b.family->with_prior_params(local), e, b.x_offset, down);
      local[p] = saved;
      double g = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t n = (t + 1 < T ? row[t + 1] : pi.size()) - row[t];
        const auto z = static_cast<std::size_t>(e.labels[t] - 1);
        double expect = 0.0;
        for (std::size_t k = 0; k < n; ++k) expect += pi[row[t] + k] * (up[row[t] + k] - down[row[t] + k]);
        g += (up[row[t] + z] - down[row[t] + z]) - expect;
      }
      grad[b.param_offset + p] = -g / (2.0 * h * static_cast<double>(T));
    }
  }
  return nll;
}

double mean_exact_nll(const std::vector<Episode>& episodes, const FamilyPtr& family, double alpha) {
  std::vector<double> v(episodes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(episodes.size()); ++i)
    v[static_cast<std::size_t>(i)] = exact_sequential_nll(episodes[static_cast<std::size_t>(i)], family, alpha);
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

FitResult fit_hyperparameters(const EpisodeSource& source, const FamilyPtr& family_template, double alpha,
                              const FitConfig& cfg) {
  cfg.validate();
  const RngStream root(cfg.seed);
  // Evaluation episodes come from a stream disjoint from every training step.
  const RngStream eval_root = root.split(std::numeric_limits<std::uint64_t>::max());
  std::vector<Episode> eval_set(cfg.eval_episodes);
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    RngStream r = eval_root.split(i);
    eval_set[i] = source(r);
  }

  auto check = [&](double v, const FamilyPtr& f) {
    if (!std::isfinite(v)) throw NumericError("fit: objective is not finite for prior " + f->to_json().dump());
  };

  FitResult res;
  res.family = family_template;
  res.initial_eval_nll = res.best_eval_nll = mean_exact_nll(eval_set, family_template, alpha);
  check(res.initial_eval_nll, family_template);
  if (cfg.steps == 0) return res;

  std::vector<double> theta = family_template->prior_params();
  const std::size_t P = theta.size();
  std::vector<double> m(P, 0.0), v(P, 0.0), grad(P);
  AdamConfig adam;
  adam.lr = cfg.lr;

  std::vector<Episode> batch(cfg.batch);
  std::vector<std::vector<double>> grads(cfg.batch);
  std::vector<double> nlls(cfg.batch);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const FamilyPtr current = family_template->with_prior_params(theta);
    const RngStream step_root = root.split(step);
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      RngStream r = step_root.split(i);
      batch[i] = source(r);
    }
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(cfg.batch); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      nlls[i] = exact_nll_and_gradient(batch[i], current, alpha, cfg.fd_step, grads[i]);
    }
    double batch_nll = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      batch_nll += nlls[i];
      for (std::size_t p = 0; p < P; ++p) grad[p] += grads[i][p];
    }
    batch_nll /= static_cast<double>(cfg.batch);
    for (double& g : grad) g /= static_cast<double>(cfg.batch);
    check(batch_nll, current);

    adam_update(theta, grad, m, v, static_cast<std::int64_t>(step + 1), adam);

    FitRecord rec{step + 1, batch_nll, std::numeric_limits<double>::quiet_NaN()};
    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps) {
      FamilyPtr candidate;
      try {
        candidate = family_template->with_prior_params(theta);
      } catch (const ConfigError&) {
        throw NumericError("fit: parameters left the admissible region at step " + std::to_string(step + 1));
      }
      rec.eval_nll = mean_exact_nll(eval_set, candidate, alpha);
      check(rec.eval_nll, candidate);
      if (rec.eval_nll < res.best_eval_nll) {
        res.best_eval_nll = rec.eval_nll;
        res.best_step = step + 1;
        res.family = candidate;
      }
    }
    res.history.push_back(rec);
  }
  return res;
}

EpisodeSource fixed_episode_source(std::vector<Episode> episodes) {
  if (episodes.empty()) throw std::invalid_argument("fixed_episode_source: no episodes");
  auto shared = std::make_shared<const std::vector<Episode>>(std::move(episodes));
  return [shared](RngStream& rng) { return (*shared)[rng.uniform_index(shared->size())]; };
}

}  // namespace dpnc
