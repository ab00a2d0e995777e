#include "dpnc/pfilter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpnc/error.hpp"
#include "dpnc/special.hpp"

namespace dpnc {

// ---- ClusterState ----

ClusterState::ClusterState(FamilyPtr family, double alpha)
    : family_(std::move(family)),
      alpha_(alpha),
      stat_size_(family_->stat_size()),
      compiled_size_(family_->compiled_size()) {
  if (!(alpha_ > 0.0)) throw std::invalid_argument("CRP alpha must be positive");
  const HyperParams prior = family_->prior();
  prior_tau_ = prior.tau;
  prior_compiled_ = std::make_shared<const std::vector<double>>(family_->compile(prior));
}

HyperParams ClusterState::hyper(int label) const {
  const auto k = static_cast<std::size_t>(label - 1);
  if (label < 1 || k >= counts_.size()) throw std::out_of_range("ClusterState::hyper: no such class");
  HyperParams h;
  h.tau.assign(tau_.begin() + static_cast<std::ptrdiff_t>(k * stat_size_),
               tau_.begin() + static_cast<std::ptrdiff_t>((k + 1) * stat_size_));
  h.nu = counts_[k];
  return h;
}

void ClusterState::assign(int label, std::span<const double> x) {
  if (label < 1 || label > num_classes() + 1) throw std::invalid_argument("ClusterState::assign: label out of range");
  if (x.size() != family_->dim()) throw DataError("observation dimension does not match the model");
  const auto k = static_cast<std::size_t>(label - 1);
  if (k == counts_.size()) {
    counts_.push_back(0);
    tau_.insert(tau_.end(), prior_tau_.begin(), prior_tau_.end());
    compiled_.resize(compiled_.size() + compiled_size_);
  }
  thread_local std::vector<double> t;
  t.resize(stat_size_);
  family_->suff_stats(x, t);
  std::span<double> tau(tau_.data() + k * stat_size_, stat_size_);
  for (std::size_t i = 0; i < stat_size_; ++i) tau[i] += t[i];
  ++counts_[k];
  ++total_;
  family_->compile(tau, counts_[k], std::span<double>(compiled_.data() + k * compiled_size_, compiled_size_));
}

void ClusterState::log_joint(std::span<const double> x, std::vector<double>& out) const {
  const std::size_t k = counts_.size();
  out.resize(k + 1);
  const double denom = std::log(static_cast<double>(total_) + alpha_);
  for (std::size_t i = 0; i < k; ++i)
    out[i] = std::log(static_cast<double>(counts_[i])) - denom +
             family_->log_predictive_compiled(
                 std::span<const double>(compiled_.data() + i * compiled_size_, compiled_size_), x);
  out[k] = std::log(alpha_) - denom + family_->log_predictive_compiled(*prior_compiled_, x);
}

std::vector<double> label_posterior(const ClusterState& clusters, std::span<const double> x) {
  if (x.size() != clusters.family().dim())
    throw DataError("observation has dimension " + std::to_string(x.size()) + ", model expects " +
                    std::to_string(clusters.family().dim()));
  std::vector<double> lj;
  clusters.log_joint(x, lj);
  const double lse = log_sum_exp(lj);
  for (double& v : lj) v = std::exp(v - lse);
  return lj;
}

namespace {
void check_observations(const Episode& e, const Family& family) {
  if (e.dim != family.dim())
    throw DataError("episode dimension " + std::to_string(e.dim) + " does not match model dimension " +
                    std::to_string(family.dim()));
  if (e.data.size() != e.length() * e.dim || e.length() == 0) throw DataError("episode has no usable observations");
  for (std::size_t t = 0; t < e.length(); ++t)
    if (!family.in_support(e.x(t)))
      throw DataError("observation at t=" + std::to_string(t) + " is outside the support of the model");
}
}  // namespace

std::vector<double> exact_sequential_log_probs(const Episode& e, FamilyPtr family, double alpha) {
  if (auto bad = validate_episode(e)) throw DataError("invalid episode: " + bad->what);
  check_observations(e, *family);
  ClusterState clusters(std::move(family), alpha);
  std::vector<double> out(e.length()), lj;
  for (std::size_t t = 0; t < e.length(); ++t) {
    const auto x = e.x(t);
    clusters.log_joint(x, lj);
    out[t] = lj[static_cast<std::size_t>(e.labels[t] - 1)] - log_sum_exp(lj);
    clusters.assign(e.labels[t], x);
  }
  return out;
}

double exact_sequential_nll(const Episode& e, FamilyPtr family, double alpha) {
  const auto lp = exact_sequential_log_probs(e, std::move(family), alpha);
  double s = 0.0;
  for (double v : lp) s += v;
  return -s / static_cast<double>(lp.size());
}

// ---- ParticleEnsemble ----

void ParticleEnsemble::normalize() {
  std::vector<double> lw(particles.size());
  for (std::size_t j = 0; j < lw.size(); ++j) lw[j] = particles[j].log_weight;
  const double lse = log_sum_exp(lw);
  for (auto& p : particles) p.log_weight -= lse;
  normalized = true;
}

std::vector<double> ParticleEnsemble::weights() const {
  std::vector<double> lw(particles.size());
  for (std::size_t j = 0; j < lw.size(); ++j) lw[j] = particles[j].log_weight;
  const double lse = log_sum_exp(lw);
  for (double& v : lw) v = std::exp(v - lse);
  return lw;
}

double ParticleEnsemble::ess() const {
  double s = 0.0;
  for (double w : weights()) s += w * w;
  return 1.0 / s;
}

double PfResult::log_marginal() const {
  double s = 0.0;
  for (double v : log_marginal_increments) s += v;
  return s;
}

void multinomial_resample(ParticleEnsemble& ensemble, RngStream& rng) {
  const auto w = ensemble.weights();
  std::vector<double> cum(w.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) cum[j] = (acc += w[j]);
  std::vector<Particle> next;
  next.reserve(w.size());
  const double log_uniform = -std::log(static_cast<double>(w.size()));
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), w.size() - 1);
    next.push_back(ensemble.particles[idx]);
    next.back().log_weight = log_uniform;
  }
  ensemble.particles = std::move(next);
  ensemble.normalized = true;
}

PfResult pf_run(const Episode& observations, FamilyPtr family, double alpha, const PfOptions& opt, RngStream& rng) {
  if (opt.particles < 1) throw std::invalid_argument("pf_run: at least one particle is required");
  if (opt.ess_threshold > static_cast<double>(opt.particles))
    throw std::invalid_argument("pf_run: ESS threshold exceeds the particle count");
  check_observations(observations, *family);

  const std::size_t J = opt.particles;
  const std::size_t T = observations.length();
  PfResult res;
  auto& parts = res.ensemble.particles;
  const ClusterState empty(std::move(family), alpha);
  parts.assign(J, Particle{{}, empty, -std::log(static_cast<double>(J))});
  for (auto& p : parts) p.trajectory.reserve(T);
  res.ensemble.normalized = true;

  std::vector<double> u(J), inc(J), lw(J);
  for (std::size_t t = 0; t < T; ++t) {
    const auto x = observations.x(t);
    for (std::size_t j = 0; j < J; ++j) u[j] = rng.uniform();

#pragma omp parallel for schedule(static) if (J >= 512)
    for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(J); ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      thread_local std::vector<double> lj;
      Particle& p = parts[j];
      p.clusters.log_joint(x, lj);
      const double lse = log_sum_exp(lj);
      // Inverse-CDF draw from the normalised label posterior.
      double acc = 0.0;
      std::size_t pick = lj.size() - 1;
      for (std::size_t k = 0; k < lj.size(); ++k) {
        acc += std::exp(lj[k] - lse);
        if (u[j] < acc) {
          pick = k;
          break;
        }
      }
      const int label = static_cast<int>(pick) + 1;
      p.trajectory.push_back(label);
      p.clusters.assign(label, x);
      inc[j] = lse;
    }

    for (std::size_t j = 0; j < J; ++j) lw[j] = parts[j].log_weight + inc[j];
    const double log_mass = log_sum_exp(lw);
    if (!std::isfinite(log_mass)) throw NumericError("particle filter weights collapsed at t=" + std::to_string(t));
    res.log_marginal_increments.push_back(log_mass);
    for (std::size_t j = 0; j < J; ++j) parts[j].log_weight = lw[j] - log_mass;

    if (res.ensemble.ess() < opt.ess_threshold) {
      multinomial_resample(res.ensemble, rng);
      ++res.resample_events;
    }
  }
  return res;
}

std::vector<int> pf_map_labels(const Episode& observations, FamilyPtr family, double alpha, const PfOptions& opt,
                               RngStream& rng) {
  const PfResult res = pf_run(observations, std::move(family), alpha, opt, rng);
  const auto& parts = res.ensemble.particles;
  std::size_t best = 0;
  for (std::size_t j = 1; j < parts.size(); ++j)
    if (parts[j].log_weight > parts[best].log_weight) best = j;
  return canonicalize_labels(parts[best].trajectory);
}

}  // namespace dpnc
