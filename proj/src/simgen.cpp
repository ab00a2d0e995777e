#include "dpnc/simgen.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "dpnc/crp.hpp"
#include "dpnc/error.hpp"

namespace dpnc {

void SyntheticConfig::validate() const {
  if (dim < 1) throw ConfigError("synthetic data: D must be >= 1");
  if (length < 1) throw ConfigError("synthetic data: T must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("synthetic data: alpha must be positive");
  if (!(nig.lambda > 0.0 && nig.a > 0.0 && nig.b > 0.0))
    throw ConfigError("synthetic data: NIG prior requires lambda, a, b > 0");
}

Episode sample_synthetic_episode(const SyntheticConfig& cfg, RngStream& rng) {
  Episode e;
  e.labels = crp_sample(cfg.alpha, cfg.length, rng);
  e.dim = cfg.dim;
  const int k = num_classes(e.labels);
  // Per-class (mu, sigma) for every dimension, drawn once in class order.
  std::vector<double> mu(static_cast<std::size_t>(k) * cfg.dim), sd(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double var = rng.inverse_gamma(cfg.nig.a, cfg.nig.b);
    mu[i] = rng.normal(cfg.nig.m, std::sqrt(var / cfg.nig.lambda));
    sd[i] = std::sqrt(var);
  }
  e.data.resize(cfg.length * cfg.dim);
  for (std::size_t t = 0; t < cfg.length; ++t) {
    const std::size_t c = static_cast<std::size_t>(e.labels[t] - 1);
    for (std::size_t d = 0; d < cfg.dim; ++d)
      e.data[t * cfg.dim + d] = rng.normal(mu[c * cfg.dim + d], sd[c * cfg.dim + d]);
  }
  return e;
}

EmpiricalDraw draw_empirical_episode(const FeatureBank& bank, double alpha, std::size_t length, RngStream& rng) {
  if (bank.classes.empty()) throw DataError("feature bank is empty");
  if (length < 1) throw ConfigError("episode length must be >= 1");
  EmpiricalDraw out;
  Episode& e = out.episode;
  e.labels = crp_sample(alpha, length, rng);
  e.dim = bank.dim;
  const auto k = static_cast<std::size_t>(num_classes(e.labels));
  if (k > bank.classes.size())
    throw DataError("episode needs " + std::to_string(k) + " classes but the bank holds " +
                    std::to_string(bank.classes.size()));

  // Distinct labels -> distinct classes via a partial Fisher-Yates shuffle.
  std::vector<std::size_t> pool(bank.classes.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);

  // Per-label lazily shuffled item orders; position `used` marks the next fresh item.
  std::vector<std::vector<std::size_t>> order(k);
  std::vector<std::size_t> used(k, 0);
  e.data.resize(length * bank.dim);
  out.bank_class.resize(length);
  out.item.resize(length);
  for (std::size_t t = 0; t < length; ++t) {
    const auto lab = static_cast<std::size_t>(e.labels[t] - 1);
    const BankClass& cls = bank.classes[pool[lab]];
    auto& ord = order[lab];
    if (ord.empty()) {
      ord.resize(cls.count);
      std::iota(ord.begin(), ord.end(), std::size_t{0});
    }
    std::size_t item;
    if (used[lab] < cls.count) {
      const std::size_t j = used[lab] + rng.uniform_index(cls.count - used[lab]);
      std::swap(ord[used[lab]], ord[j]);
      item = ord[used[lab]++];
    } else {
      item = rng.uniform_index(cls.count);
      ++out.replacement_draws;
    }
    const auto x = cls.item(item, bank.dim);
    std::copy(x.begin(), x.end(), e.data.begin() + static_cast<std::ptrdiff_t>(t * bank.dim));
    out.bank_class[t] = pool[lab];
    out.item[t] = item;
  }
  return out;
}

EpisodeSource synthetic_source(SyntheticConfig cfg) {
  cfg.validate();
  return [cfg](RngStream& rng) { return sample_synthetic_episode(cfg, rng); };
}

EpisodeSource bank_source(std::shared_ptr<const FeatureBank> bank, double alpha, std::size_t length,
                          std::shared_ptr<std::atomic<std::size_t>> replacement_counter) {
  return [bank = std::move(bank), alpha, length, counter = std::move(replacement_counter)](RngStream& rng) {
    EmpiricalDraw d = draw_empirical_episode(*bank, alpha, length, rng);
    if (counter && d.replacement_draws > 0) counter->fetch_add(d.replacement_draws, std::memory_order_relaxed);
    return std::move(d.episode);
  };
}

void SparseBankConfig::validate() const {
  if (classes < 1) throw ConfigError("make-sparse-bank: classes must be >= 1");
  if (items < 1) throw ConfigError("make-sparse-bank: items must be >= 1");
  if (dim < 1) throw ConfigError("make-sparse-bank: dim must be >= 1");
  if (!(zero_rate >= 0.0 && zero_rate < 1.0)) throw ConfigError("make-sparse-bank: zero_rate must be in [0, 1)");
  if (!(gate_concentration > 0.0 && mu_sd >= 0.0 && sigma_a > 0.0 && sigma_b > 0.0 && item_shift_sd >= 0.0))
    throw ConfigError("make-sparse-bank: invalid distribution parameters");
}

FeatureBank make_sparse_bank(const SparseBankConfig& cfg) {
  cfg.validate();
  RngStream root(cfg.seed);
  FeatureBank bank;
  bank.dim = cfg.dim;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    RngStream rng = root.split(c);
    std::vector<double> gate(cfg.dim), mu(cfg.dim), sd(cfg.dim);
    for (std::size_t d = 0; d < cfg.dim; ++d) {
      gate[d] = cfg.zero_rate == 0.0
                    ? 1.0
                    : rng.beta(cfg.gate_concentration * (1.0 - cfg.zero_rate), cfg.gate_concentration * cfg.zero_rate);
      mu[d] = rng.normal(0.0, cfg.mu_sd);
      sd[d] = std::sqrt(rng.inverse_gamma(cfg.sigma_a, cfg.sigma_b));
    }
    BankClass bc;
    bc.id = static_cast<int>(c);
    bc.count = cfg.items;
    bc.items.resize(cfg.items * cfg.dim);
    for (std::size_t i = 0; i < cfg.items; ++i) {
      const double shift = cfg.item_shift_sd > 0.0 ? rng.normal(0.0, cfg.item_shift_sd) : 0.0;
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        double v = 0.0;
        if (rng.bernoulli(gate[d])) {
          // Round through float so stored values reload bit-identically, and keep them strictly positive.
          v = static_cast<double>(static_cast<float>(std::exp(rng.normal(mu[d] + shift, sd[d]))));
          if (v == 0.0) v = static_cast<double>(std::numeric_limits<float>::min());
        }
        bc.items[i * cfg.dim + d] = v;
      }
    }
    bank.classes.push_back(std::move(bc));
  }
  return bank;
}

}  // namespace dpnc
