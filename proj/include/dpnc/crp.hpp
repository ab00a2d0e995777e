#pragma once

#include <span>
#include <vector>

#include "dpnc/rng.hpp"

namespace dpnc {

/// Chinese restaurant process state: concentration and per-class counts.
struct CrpState {
  double alpha = 1.0;
  std::vector<int> counts;
  int total = 0;

  explicit CrpState(double alpha = 1.0);
  int num_classes() const { return static_cast<int>(counts.size()); }
  /// Records one occurrence of 1-based class `label` (label K+1 opens a class).
  void observe(int label);
};

/// Conditional probabilities of the next label: entry k < K is n_k/(N+alpha),
/// the final entry (new class) is alpha/(N+alpha).
std::vector<double> crp_predictive(const CrpState& state);

/// log p(next label = label | state), label in [1, K+1].
double crp_log_predictive(const CrpState& state, int label);

std::vector<int> crp_sample(double alpha, std::size_t length, RngStream& rng);

/// Sum of sequential log conditionals. Throws std::invalid_argument for
/// non-canonical labels.
double crp_log_prob(std::span<const int> labels, double alpha);

/// Closed Ewens form: log[alpha^K prod_k (n_k - 1)! / prod_{i<T} (alpha + i)].
double crp_log_prob_ewens(std::span<const int> labels, double alpha);

/// Per-timestep NLL of the observation-blind CRP predictor.
double crp_baseline_nll(std::span<const int> labels, double alpha);

/// Greedy MAP labelling under the CRP alone. Ties go to the lowest class id,
/// so with alpha <= 1 this is the all-ones sequence.
std::vector<int> crp_map_labels(std::size_t length, double alpha);

}  // namespace dpnc
