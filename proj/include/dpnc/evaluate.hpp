#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dpnc/circuit.hpp"
#include "dpnc/episode.hpp"
#include "dpnc/expfam.hpp"
#include "dpnc/metrics.hpp"
#include "dpnc/pfilter.hpp"
#include "dpnc/rng.hpp"
#include "dpnc/simgen.hpp"

namespace dpnc {

/// A sequential inference method as seen by the evaluation harness.
class Method {
 public:
  virtual ~Method() = default;
  virtual std::string name() const = 0;
  virtual bool supports(Setting s) const = 0;

  /// log p(z_t | x_{1:t}, z_{1:t-1}) of the true labels.
  virtual std::vector<double> log_probs(const Episode& e, RngStream& rng) const = 0;
  /// MAP labelling from observations only.
  virtual std::vector<int> map_labels(const Episode& e, RngStream& rng) const = 0;

  /// Batched forms; the defaults run the per-episode calls in parallel.
  virtual std::vector<std::vector<double>> log_probs_batch(std::span<const Episode> es,
                                                           std::span<RngStream> rngs) const;
  virtual std::vector<std::vector<int>> map_labels_batch(std::span<const Episode> es, std::span<RngStream> rngs) const;
};

using MethodPtr = std::shared_ptr<const Method>;

/// CRP prior alone: ignores observations; MAP puts everything in class 1.
MethodPtr make_crp_method(double alpha);
/// Exact Bayes predictor; sequential setting only.
MethodPtr make_exact_method(FamilyPtr family, double alpha);
/// Particle filter: exact predictor when labels are revealed (the posterior
/// path is unique), pf_map_labels otherwise.
MethodPtr make_pf_method(FamilyPtr family, double alpha, PfOptions opt);
MethodPtr make_circuit_method(std::shared_ptr<const CircuitParams<float>> params, CircuitConfig cfg);

struct EpisodeResult {
  std::size_t index = 0;
  double nll = 0.0;  // sequential setting
  double ari = 0.0;  // fully unobserved setting
  double ami = 0.0;
};

struct Evaluation {
  MetricsReport report;
  std::vector<EpisodeResult> per_episode;
};

/// Scores n_episodes held-out episodes. Episode i is generated from
/// RngStream(seed).split(i).split(0); the method's own randomness uses
/// .split(i).split(1). Deterministic for any thread count.
/// Throws ConfigError when the method does not support the setting.
Evaluation evaluate(const Method& method, const EpisodeSource& source, Setting setting, std::size_t n_episodes,
                    std::uint64_t seed);

struct TimingOptions {
  std::size_t warmup = 10;       // sequences run before measuring
  std::size_t batches = 5;       // timed batches; the median of their means is reported
  std::size_t batch_size = 20;   // sequences per timed batch
};

/// Wall-clock milliseconds per sequence on a single thread. Episodes are
/// generated before the clock starts.
double time_method(const Method& method, const EpisodeSource& source, Setting setting, std::uint64_t seed,
                   const TimingOptions& opt);

}  // namespace dpnc
