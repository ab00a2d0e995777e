#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpnc/episode.hpp"

namespace dpnc {

struct NllPerplexity {
  double nll = 0.0;
  double perplexity = 1.0;
};

/// nll = -mean(log_probs), perplexity = exp(nll). Throws std::invalid_argument
/// on empty input or non-finite entries.
NllPerplexity nll_and_perplexity(std::span<const double> log_probs);

/// Adjusted Rand index (Hubert-Arabie). Label values are arbitrary integers.
/// When the adjustment is 0/0 the result is 1 for identical partitions and 0
/// otherwise. Throws std::invalid_argument on length mismatch or length < 2.
double ari(std::span<const int> a, std::span<const int> b);

/// Adjusted mutual information with hypergeometric expected MI, natural logs
/// and the arithmetic mean of the two entropies as normaliser. Same 0/0 rule
/// and errors as ari().
double ami(std::span<const int> a, std::span<const int> b);

/// Expected mutual information of two partitions with the given class sizes
/// under random permutation (hypergeometric model).
double expected_mutual_information(std::span<const long> a_sizes, std::span<const long> b_sizes, long n);

/// Mutual information and entropies (natural log) of two labelings.
struct InfoTerms {
  double mi = 0.0, h_a = 0.0, h_b = 0.0;
};
InfoTerms information_terms(std::span<const int> a, std::span<const int> b);

struct MetricsReport {
  std::string method;
  Setting setting = Setting::SequentialObservation;
  std::size_t episodes = 0;
  std::optional<double> nll, perplexity;  // sequential setting
  std::optional<double> ari, ami;         // fully unobserved setting
  std::optional<double> ms_per_sequence;  // only when timing was requested
  std::optional<std::size_t> replacement_draws;  // bank data: items drawn after a class pool ran dry
  std::string config_digest;

  nlohmann::json to_json() const;
  /// Header matching csv_row(): method, setting, episodes, NLL, Perplexity,
  /// ARI, AMI, ms_seq_obs, ms_fully_unobs, config_digest. Absent values are empty.
  static std::string csv_header();
  std::string csv_row() const;
};

/// Fixed-precision number formatting shared by all report writers.
std::string format_number(double v);

}  // namespace dpnc
