#include "dpnc/crp.hpp"

#include <cmath>
#include <stdexcept>

#include "dpnc/episode.hpp"
#include "dpnc/special.hpp"

namespace dpnc {

CrpState::CrpState(double a) : alpha(a) {
  if (!(alpha > 0.0)) throw std::invalid_argument("CRP alpha must be positive");
}

void CrpState::observe(int label) {
  if (label < 1 || label > num_classes() + 1)
    throw std::invalid_argument("CRP label out of range for current state");
  if (label == num_classes() + 1) counts.push_back(0);
  ++counts[label - 1];
  ++total;
}

std::vector<double> crp_predictive(const CrpState& state) {
  std::vector<double> p(state.counts.size() + 1);
  const double denom = state.total + state.alpha;
  for (std::size_t k = 0; k < state.counts.size(); ++k) p[k] = state.counts[k] / denom;
  p.back() = state.alpha / denom;
  return p;
}

double crp_log_predictive(const CrpState& state, int label) {
  const double denom = std::log(state.total + state.alpha);
  if (label == state.num_classes() + 1) return std::log(state.alpha) - denom;
  return std::log(static_cast<double>(state.counts.at(label - 1))) - denom;
}

std::vector<int> crp_sample(double alpha, std::size_t length, RngStream& rng) {
  CrpState state(alpha);
  std::vector<int> labels;
  labels.reserve(length);
  std::vector<double> weights;
  for (std::size_t t = 0; t < length; ++t) {
    weights.assign(state.counts.begin(), state.counts.end());
    weights.push_back(alpha);
    const int label = static_cast<int>(rng.categorical(weights)) + 1;
    state.observe(label);
    labels.push_back(label);
  }
  return labels;
}

namespace {
void require_canonical(std::span<const int> labels) {
  if (auto bad = validate_labels(labels)) throw std::invalid_argument("non-canonical labels: " + bad->what);
}
}  // namespace

double crp_log_prob(std::span<const int> labels, double alpha) {
  require_canonical(labels);
  CrpState state(alpha);
  double lp = 0.0;
  for (int z : labels) {
    lp += crp_log_predictive(state, z);
    state.observe(z);
  }
  return lp;
}

double crp_log_prob_ewens(std::span<const int> labels, double alpha) {
  require_canonical(labels);
  std::vector<int> counts(num_classes(labels), 0);
  for (int z : labels) ++counts[z - 1];
  double lp = counts.size() * std::log(alpha);
  for (int n : counts) lp += log_gamma(static_cast<double>(n));  // log (n-1)!
  lp += log_gamma(alpha) - log_gamma(alpha + static_cast<double>(labels.size()));
  return lp;
}

double crp_baseline_nll(std::span<const int> labels, double alpha) {
  return -crp_log_prob(labels, alpha) / static_cast<double>(labels.size());
}

std::vector<int> crp_map_labels(std::size_t length, double alpha) {
  CrpState state(alpha);
  std::vector<int> out;
  for (std::size_t t = 0; t < length; ++t) {
    const auto p = crp_predictive(state);
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[best]) best = k;
    const int label = static_cast<int>(best) + 1;
    state.observe(label);
    out.push_back(label);
  }
  return out;
}

}  // namespace dpnc
