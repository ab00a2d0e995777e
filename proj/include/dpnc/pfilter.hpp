#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "dpnc/episode.hpp"
#include "dpnc/expfam.hpp"
#include "dpnc/rng.hpp"

namespace dpnc {

/// Per-class conjugate posteriors for one labelling of a sequence prefix.
///
/// Class k (1-based) keeps its tau block, its count and the compiled
/// predictive of its current posterior; the prior's compiled predictive is
/// shared between all copies.
class ClusterState {
 public:
  ClusterState(FamilyPtr family, double alpha);

  const Family& family() const { return *family_; }
  double alpha() const { return alpha_; }
  int num_classes() const { return static_cast<int>(counts_.size()); }
  int count(int label) const { return counts_.at(static_cast<std::size_t>(label - 1)); }
  int total() const { return total_; }
  HyperParams hyper(int label) const;

  /// Adds x to class `label` (K+1 opens a new class).
  void assign(int label, std::span<const double> x);

  /// out[k-1] = log p(z = k | counts) + log p(x | class k posterior) for
  /// k = 1..K+1, the last entry using the prior predictive.
  void log_joint(std::span<const double> x, std::vector<double>& out) const;

 private:
  FamilyPtr family_;
  double alpha_;
  std::size_t stat_size_, compiled_size_;
  std::shared_ptr<const std::vector<double>> prior_compiled_;
  std::vector<double> prior_tau_;
  std::vector<int> counts_;
  int total_ = 0;
  std::vector<double> tau_;       // K x stat_size
  std::vector<double> compiled_;  // K x compiled_size
};

/// Posterior over the next label given the clusters and the new observation:
/// CRP prior times posterior predictive, normalised over K+1 entries.
std::vector<double> label_posterior(const ClusterState& clusters, std::span<const double> x);

/// log p(z_t | x_{1:t}, z_{1:t-1}) for every t, following the true labels.
std::vector<double> exact_sequential_log_probs(const Episode& e, FamilyPtr family, double alpha);

/// Mean per-timestep negative log-likelihood of the exact Bayes predictor in
/// the sequential observation setting.
double exact_sequential_nll(const Episode& e, FamilyPtr family, double alpha);

struct Particle {
  std::vector<int> trajectory;
  ClusterState clusters;
  double log_weight = 0.0;
};

struct ParticleEnsemble {
  std::vector<Particle> particles;
  bool normalized = false;

  std::size_t size() const { return particles.size(); }
  /// Shifts log weights so the weights sum to one.
  void normalize();
  /// 1 / sum w_j^2 over normalised weights.
  double ess() const;
  std::vector<double> weights() const;
};

struct PfOptions {
  std::size_t particles = 100;
  double ess_threshold = 50.0;
};

struct PfResult {
  ParticleEnsemble ensemble;
  std::vector<double> log_marginal_increments;
  std::size_t resample_events = 0;

  double log_marginal() const;
};

/// Rao-Blackwellised particle filter over label trajectories.
///
/// Each step samples every particle's next label from its exact label
/// posterior (the locally optimal proposal) and multiplies its weight by the
/// posterior's normaliser. After normalising, the ensemble is resampled
/// multinomially, with weights reset to uniform, iff ESS < ess_threshold.
/// Random draws are made serially before the per-particle work, so results
/// do not depend on the thread count.
PfResult pf_run(const Episode& observations, FamilyPtr family, double alpha, const PfOptions& opt, RngStream& rng);

/// Trajectory of the largest-weight particle (lowest index on ties).
std::vector<int> pf_map_labels(const Episode& observations, FamilyPtr family, double alpha, const PfOptions& opt,
                               RngStream& rng);

/// Multinomial resampling of a normalised ensemble in place; weights become uniform.
void multinomial_resample(ParticleEnsemble& ensemble, RngStream& rng);

}  // namespace dpnc
