#include "dpnc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "dpnc/special.hpp"

namespace dpnc {

NllPerplexity nll_and_perplexity(std::span<const double> log_probs) {
  if (log_probs.empty()) throw std::invalid_argument("nll_and_perplexity: no log-probabilities");
  double s = 0.0;
  for (double v : log_probs) {
    if (!std::isfinite(v)) throw std::invalid_argument("nll_and_perplexity: non-finite log-probability");
    s += v;
  }
  const double nll = -s / static_cast<double>(log_probs.size());
  return {nll, std::exp(nll)};
}

namespace {

struct Contingency {
  std::vector<long> a_sizes, b_sizes;
  std::vector<long> cells;  // nonzero cell counts
  long n = 0;
  bool identical = false;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("partition lengths differ");
  if (a.size() < 2) throw std::invalid_argument("partitions need at least two items");
  std::map<int, long> ca, cb;
  std::map<std::pair<int, int>, long> cab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++cab[{a[i], b[i]}];
  }
  Contingency c;
  c.n = static_cast<long>(a.size());
  for (const auto& [k, v] : ca) c.a_sizes.push_back(v);
  for (const auto& [k, v] : cb) c.b_sizes.push_back(v);
  for (const auto& [k, v] : cab) c.cells.push_back(v);
  // Same partition iff every class of a meets exactly one class of b and vice versa.
  c.identical = cab.size() == ca.size() && cab.size() == cb.size();
  return c;
}

double comb2(long x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); }

}  // namespace

double ari(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (long v : c.cells) index += comb2(v);
  for (long v : c.a_sizes) sa += comb2(v);
  for (long v : c.b_sizes) sb += comb2(v);
  const double expected = sa * sb / comb2(c.n);
  const double max_index = 0.5 * (sa + sb);
  const double denom = max_index - expected;
  if (std::abs(denom) < 1e-12 * std::max(1.0, max_index)) return c.identical ? 1.0 : 0.0;
  return (index - expected) / denom;
}

InfoTerms information_terms(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("partition lengths differ");
  std::map<int, long> ca, cb;
  std::map<std::pair<int, int>, long> cab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++cab[{a[i], b[i]}];
  }
  const double n = static_cast<double>(a.size());
  InfoTerms t;
  for (const auto& [k, v] : ca) t.h_a -= (v / n) * std::log(v / n);
  for (const auto& [k, v] : cb) t.h_b -= (v / n) * std::log(v / n);
  for (const auto& [k, v] : cab) {
    const double pa = ca[k.first] / n, pb = cb[k.second] / n, p = v / n;
    t.mi += p * std::log(p / (pa * pb));
  }
  return t;
}

double expected_mutual_information(std::span<const long> a_sizes, std::span<const long> b_sizes, long n) {
  const double N = static_cast<double>(n);
  const double lgN = log_gamma(N + 1.0);
  double emi = 0.0;
  for (long ai : a_sizes) {
    for (long bj : b_sizes) {
      const long lo = std::max(1L, ai + bj - n), hi = std::min(ai, bj);
      // log of the hypergeometric normaliser terms that do not depend on nij
      const double base = log_gamma(ai + 1.0) + log_gamma(bj + 1.0) + log_gamma(N - ai + 1.0) +
                          log_gamma(N - bj + 1.0) - lgN;
      for (long nij = lo; nij <= hi; ++nij) {
        const double x = static_cast<double>(nij);
        const double logp = base - log_gamma(x + 1.0) - log_gamma(ai - x + 1.0) - log_gamma(bj - x + 1.0) -
                            log_gamma(N - ai - bj + x + 1.0);
        emi += (x / N) * std::log(N * x / (static_cast<double>(ai) * static_cast<double>(bj))) * std::exp(logp);
      }
    }
  }
  return emi;
}

double ami(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  const InfoTerms t = information_terms(a, b);
  const double emi = expected_mutual_information(c.a_sizes, c.b_sizes, c.n);
  const double denom = 0.5 * (t.h_a + t.h_b) - emi;
  if (std::abs(denom) < 1e-12 * std::max(1.0, 0.5 * (t.h_a + t.h_b))) return c.identical ? 1.0 : 0.0;
  return (t.mi - emi) / denom;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

nlohmann::json MetricsReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"method", method},
                      {"setting", std::string(to_string(setting))},
                      {"episodes", episodes},
                      {"nll", opt(nll)},
                      {"perplexity", opt(perplexity)},
                      {"ari", opt(ari)},
                      {"ami", opt(ami)},
                      {"config_digest", config_digest}};
  if (ms_per_sequence) j["ms_per_sequence"] = *ms_per_sequence;
  if (replacement_draws) j["replacement_draws"] = *replacement_draws;
  return j;
}

std::string MetricsReport::csv_header() {
  return "method,setting,episodes,NLL,Perplexity,ARI,AMI,ms_seq_obs,ms_fully_unobs,config_digest";
}

std::string MetricsReport::csv_row() const {
  auto f = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  const bool seq = setting == Setting::SequentialObservation;
  return method + "," + std::string(to_string(setting)) + "," + std::to_string(episodes) + "," + f(nll) + "," +
         f(perplexity) + "," + f(ari) + "," + f(ami) + "," + (seq ? f(ms_per_sequence) : "") + "," +
         (seq ? "" : f(ms_per_sequence)) + "," + config_digest;
}

}  // namespace dpnc
