#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dpnc/episode.hpp"
#include "dpnc/expfam.hpp"
#include "dpnc/feature_bank.hpp"
#include "dpnc/rng.hpp"

namespace dpnc {

/// Synthetic DPMM: CRP labels, per-class Gaussian parameters drawn per
/// dimension from a shared normal-inverse-gamma prior.
struct SyntheticConfig {
  std::size_t dim = 2;
  NigHyper nig{0.0, 0.01, 2.0, 2.0};
  double alpha = 1.0;
  std::size_t length = 100;

  void validate() const;
};

Episode sample_synthetic_episode(const SyntheticConfig& cfg, RngStream& rng);

/// One empirical episode plus where each observation came from.
struct EmpiricalDraw {
  Episode episode;
  std::vector<std::size_t> bank_class;  // index into FeatureBank::classes, per timestep
  std::vector<std::size_t> item;        // row within that class, per timestep
  std::size_t replacement_draws = 0;    // draws made after a class pool ran dry
};

/// CRP labels; distinct labels mapped to distinct bank classes chosen
/// uniformly at random; items drawn uniformly without replacement within each
/// class. A class that runs out of items falls back to drawing with
/// replacement and the fallback is counted in replacement_draws.
/// Throws DataError when the CRP draws more classes than the bank holds.
EmpiricalDraw draw_empirical_episode(const FeatureBank& bank, double alpha, std::size_t length, RngStream& rng);

inline Episode sample_empirical_episode(const FeatureBank& bank, double alpha, std::size_t length, RngStream& rng) {
  return draw_empirical_episode(bank, alpha, length, rng).episode;
}

/// Episode source used by training, fitting and evaluation: episode content
/// depends only on the stream it is handed.
using EpisodeSource = std::function<Episode(RngStream&)>;

EpisodeSource synthetic_source(SyntheticConfig cfg);
/// When `replacement_counter` is set, every with-replacement fallback draw is
/// added to it.
EpisodeSource bank_source(std::shared_ptr<const FeatureBank> bank, double alpha, std::size_t length,
                          std::shared_ptr<std::atomic<std::size_t>> replacement_counter = nullptr);

/// Parameters for the bundled sparse nonnegative bank generator.
///
/// Each class c and dimension d gets a gate probability p_cd ~ Beta with mean
/// 1 - zero_rate and concentration gate_concentration, a log-mean
/// mu_cd ~ N(0, mu_sd^2) and a log-variance sigma_cd^2 ~ InvGamma(sigma_a,
/// sigma_b). Each item draws one shared log-scale offset s ~ N(0, item_shift_sd^2);
/// then x_d = 0 with probability 1 - p_cd and exp(mu_cd + s + sigma_cd eps)
/// otherwise. With item_shift_sd > 0 the dimensions are correlated within a
/// class, which a per-dimension hurdle model cannot represent.
struct SparseBankConfig {
  std::size_t classes = 100;
  std::size_t items = 100;
  std::size_t dim = 16;
  std::uint64_t seed = 0;
  double zero_rate = 0.5;
  double gate_concentration = 2.0;
  double mu_sd = 1.0;
  double sigma_a = 4.0;
  double sigma_b = 0.6;
  double item_shift_sd = 0.0;

  void validate() const;
};

FeatureBank make_sparse_bank(const SparseBankConfig& cfg);

}  // namespace dpnc
