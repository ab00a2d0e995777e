#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dpnc/episode.hpp"
#include "dpnc/expfam.hpp"
#include "dpnc/simgen.hpp"

namespace dpnc {

struct FitConfig {
  std::size_t steps = 10000;
  std::size_t batch = 128;
  double lr = 0.1;
  std::uint64_t seed = 0;
  /// Best-seen tracking: the candidate prior is scored on a fixed set of
  /// eval_episodes episodes every eval_every steps (and after the last step).
  std::size_t eval_every = 100;
  std::size_t eval_episodes = 256;
  /// Central-difference step, relative, in the unconstrained parameterisation.
  double fd_step = 1e-4;

  void validate() const;
};

struct FitRecord {
  std::size_t step = 0;
  double batch_nll = 0.0;
  double eval_nll = 0.0;  // NaN on steps without an evaluation
};

struct FitResult {
  FamilyPtr family;  // best-seen prior
  double initial_eval_nll = 0.0;
  double best_eval_nll = 0.0;
  std::size_t best_step = 0;
  std::vector<FitRecord> history;
};

/// Mean exact sequential NLL of `e` and its gradient with respect to
/// family.prior_params().
///
/// The per-step label posterior pi_{t,k} is computed once; each prior
/// parameter only enters through the predictive log-density of the component
/// that owns it, so the derivative is
///   -(1/T) sum_t [ dl(t, z_t) - sum_k pi_{t,k} dl(t, k) ]
/// with dl obtained by central differences on replays of that component alone.
double exact_nll_and_gradient(const Episode& e, const FamilyPtr& family, double alpha, double fd_step,
                              std::vector<double>& grad);

/// Mean exact sequential NLL over a set of episodes (parallel over episodes).
double mean_exact_nll(const std::vector<Episode>& episodes, const FamilyPtr& family, double alpha);

/// Adam on the unconstrained prior parameters, fresh minibatch from `source`
/// at every step (step s, slot i uses RngStream(seed).split(s).split(i)).
/// Throws NumericError naming the offending prior when the objective is not finite.
FitResult fit_hyperparameters(const EpisodeSource& source, const FamilyPtr& family_template, double alpha,
                              const FitConfig& cfg);

/// Source that draws uniformly from a fixed list of episodes.
EpisodeSource fixed_episode_source(std::vector<Episode> episodes);

}  // namespace dpnc
