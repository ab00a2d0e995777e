#pragma once

// Brute-force reference computations. Each one is written independently of
// the library code it checks: closed-form marginal likelihoods instead of
// predictive densities, direct pair counting instead of contingency formulas,
// exhaustive permutation averages instead of hypergeometric sums.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

namespace oracle {

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Every restricted growth string (canonical labelling) of length n, 1-based.
inline std::vector<std::vector<int>> canonical_labelings(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int mx) {
    if (static_cast<int>(cur.size()) == n) {
      out.push_back(cur);
      return;
    }
    for (int k = 1; k <= mx + 1; ++k) {
      cur.push_back(k);
      rec(std::max(mx, k));
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

/// log P(labels) under the CRP as a product of the sequential seating rule.
inline double crp_log_prob(const std::vector<int>& z, double alpha) {
  std::map<int, int> counts;
  double lp = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto it = counts.find(z[i]);
    const double num = it == counts.end() ? alpha : static_cast<double>(it->second);
    lp += std::log(num / (static_cast<double>(i) + alpha));
    ++counts[z[i]];
  }
  return lp;
}

struct Nig {
  double m, lambda, a, b;
};

/// Closed-form log marginal likelihood of 1-d points under a Gaussian with
/// a normal-inverse-gamma prior, from the standard posterior parameters.
inline double nig_log_marginal(const std::vector<double>& xs, const Nig& p) {
  const double n = static_cast<double>(xs.size());
  if (xs.empty()) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double ln = p.lambda + n;
  const double an = p.a + n / 2.0;
  const double bn = p.b + 0.5 * ss + p.lambda * n * (mean - p.m) * (mean - p.m) / (2.0 * ln);
  return std::lgamma(an) - std::lgamma(p.a) + p.a * std::log(p.b) - an * std::log(bn) +
         0.5 * (std::log(p.lambda) - std::log(ln)) - 0.5 * n * kLog2Pi;
}

/// log p(z, x) for D = 1 NIG data.
inline double log_joint(const std::vector<int>& z, const std::vector<double>& x, const Nig& p, double alpha) {
  std::map<int, std::vector<double>> groups;
  for (std::size_t i = 0; i < z.size(); ++i) groups[z[i]].push_back(x[i]);
  double lj = crp_log_prob(z, alpha);
  for (const auto& [k, xs] : groups) lj += nig_log_marginal(xs, p);
  return lj;
}

inline double logsumexp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double a : v) s += std::exp(a - mx);
  return mx + std::log(s);
}

/// log p(x_{1:T}) by summing over every canonical labelling.
inline double log_marginal_enumerated(const std::vector<double>& x, const Nig& p, double alpha) {
  std::vector<double> terms;
  for (const auto& z : canonical_labelings(static_cast<int>(x.size()))) terms.push_back(log_joint(z, x, p, alpha));
  return logsumexp(terms);
}

/// log p(z_t | z_{<t}, x_{1:t}) for every t, each as a ratio of joints with
/// z_{<t} held at the truth and z_t ranging over its K+1 admissible values.
inline std::vector<double> sequential_log_probs_by_joints(const std::vector<int>& z, const std::vector<double>& x,
                                                          const Nig& p, double alpha) {
  std::vector<double> out;
  for (std::size_t t = 0; t < z.size(); ++t) {
    std::vector<int> prefix(z.begin(), z.begin() + static_cast<long>(t));
    std::vector<double> xp(x.begin(), x.begin() + static_cast<long>(t) + 1);
    const int k_max = prefix.empty() ? 0 : *std::max_element(prefix.begin(), prefix.end());
    std::vector<double> alts;
    double truth = 0.0;
    for (int k = 1; k <= k_max + 1; ++k) {
      auto zz = prefix;
      zz.push_back(k);
      const double lj = log_joint(zz, xp, p, alpha);
      alts.push_back(lj);
      if (k == z[t]) truth = lj;
    }
    out.push_back(truth - logsumexp(alts));
  }
  return out;
}

/// Adjusted Rand index by explicit enumeration of all item pairs.
inline double ari_pairs(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  double both = 0, in_a = 0, in_b = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
    }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double expected = in_a * in_b / pairs;
  const double max_index = 0.5 * (in_a + in_b);
  return (both - expected) / (max_index - expected);
}

/// Mutual information in nats from the joint empirical distribution.
inline double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0 / n;
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [k, p] : joint) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
  return mi;
}

/// E[MI] over every permutation of b's item order (n must be small).
inline double expected_mi_by_permutation(const std::vector<int>& a, std::vector<int> b) {
  std::sort(b.begin(), b.end());
  double total = 0.0;
  long count = 0;
  do {
    total += mutual_information(a, b);
    ++count;
  } while (std::next_permutation(b.begin(), b.end()));
  // next_permutation visits distinct arrangements of a multiset, each equally
  // likely under a uniformly random permutation of positions.
  return total / static_cast<double>(count);
}

}  // namespace oracle
