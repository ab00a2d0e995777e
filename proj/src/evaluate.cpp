#include "dpnc/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <omp.h>

#include "dpnc/crp.hpp"
#include "dpnc/error.hpp"
#include "dpnc/kernels.hpp"

namespace dpnc {

std::vector<std::vector<double>> Method::log_probs_batch(std::span<const Episode> es, std::span<RngStream> rngs) const {
  std::vector<std::vector<double>> out(es.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(es.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = log_probs(es[k], rngs[k]);
  }
  return out;
}

std::vector<std::vector<int>> Method::map_labels_batch(std::span<const Episode> es, std::span<RngStream> rngs) const {
  std::vector<std::vector<int>> out(es.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(es.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = map_labels(es[k], rngs[k]);
  }
  return out;
}

namespace {

class CrpMethod final : public Method {
 public:
  explicit CrpMethod(double alpha) : alpha_(alpha) {}
  std::string name() const override { return "crp"; }
  bool supports(Setting) const override { return true; }
  std::vector<double> log_probs(const Episode& e, RngStream&) const override {
    CrpState st{alpha_};
    std::vector<double> out;
    out.reserve(e.length());
    for (int z : e.labels) {
      out.push_back(crp_log_predictive(st, z));
      st.observe(z);
    }
    return out;
  }
  std::vector<int> map_labels(const Episode& e, RngStream&) const override {
    return crp_map_labels(e.length(), alpha_);
  }

 private:
  double alpha_;
};

class ExactMethod : public Method {
 public:
  ExactMethod(FamilyPtr f, double alpha) : family_(std::move(f)), alpha_(alpha) {}
  std::string name() const override { return "exact"; }
  bool supports(Setting s) const override { return s == Setting::SequentialObservation; }
  std::vector<double> log_probs(const Episode& e, RngStream&) const override {
    return exact_sequential_log_probs(e, family_, alpha_);
  }
  std::vector<int> map_labels(const Episode&, RngStream&) const override {
    throw ConfigError("method exact supports only the sequential setting");
  }

 protected:
  FamilyPtr family_;
  double alpha_;
};

class PfMethod final : public ExactMethod {
 public:
  PfMethod(FamilyPtr f, double alpha, PfOptions opt) : ExactMethod(std::move(f), alpha), opt_(opt) {}
  std::string name() const override { return "pf"; }
  bool supports(Setting) const override { return true; }
  std::vector<int> map_labels(const Episode& e, RngStream& rng) const override {
    return pf_map_labels(e, family_, alpha_, opt_, rng);
  }

 private:
  PfOptions opt_;
};

class CircuitMethod final : public Method {
 public:
  CircuitMethod(std::shared_ptr<const CircuitParams<float>> p, CircuitConfig cfg) : p_(std::move(p)), cfg_(cfg) {}
  std::string name() const override { return "circuit"; }
  bool supports(Setting) const override { return true; }
  std::vector<double> log_probs(const Episode& e, RngStream&) const override {
    return circuit_log_probs(*p_, cfg_, std::span<const Episode>(&e, 1)).front();
  }
  std::vector<int> map_labels(const Episode& e, RngStream&) const override { return circuit_map(*p_, cfg_, e); }
  std::vector<std::vector<double>> log_probs_batch(std::span<const Episode> es, std::span<RngStream>) const override {
    return circuit_log_probs(*p_, cfg_, es);
  }
  std::vector<std::vector<int>> map_labels_batch(std::span<const Episode> es, std::span<RngStream>) const override {
    return circuit_map_batch(*p_, cfg_, es);
  }

 private:
  std::shared_ptr<const CircuitParams<float>> p_;
  CircuitConfig cfg_;
};

constexpr std::size_t kEvalChunk = 256;

}  // namespace

MethodPtr make_crp_method(double alpha) { return std::make_shared<CrpMethod>(alpha); }
MethodPtr make_exact_method(FamilyPtr family, double alpha) {
  return std::make_shared<ExactMethod>(std::move(family), alpha);
}
MethodPtr make_pf_method(FamilyPtr family, double alpha, PfOptions opt) {
  return std::make_shared<PfMethod>(std::move(family), alpha, opt);
}
MethodPtr make_circuit_method(std::shared_ptr<const CircuitParams<float>> params, CircuitConfig cfg) {
  return std::make_shared<CircuitMethod>(std::move(params), cfg);
}

Evaluation evaluate(const Method& method, const EpisodeSource& source, Setting setting, std::size_t n_episodes,
                    std::uint64_t seed) {
  if (!method.supports(setting))
    throw ConfigError("method " + method.name() + " does not support the " + std::string(to_string(setting)) +
                      " setting");
  if (n_episodes < 1) throw ConfigError("evaluation needs at least one episode");
  const RngStream root(seed);
  Evaluation ev;
  ev.report.method = method.name();
  ev.report.setting = setting;
  ev.report.episodes = n_episodes;
  std::vector<double> all_lp;
  double ari_sum = 0.0, ami_sum = 0.0;

  for (std::size_t start = 0; start < n_episodes; start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, n_episodes - start);
    std::vector<Episode> es(n);
    std::vector<RngStream> rngs;
    rngs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rngs.push_back(root.split(start + i).split(1));
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      RngStream r = root.split(start + static_cast<std::size_t>(i)).split(0);
      es[static_cast<std::size_t>(i)] = source(r);
    }
    if (setting == Setting::SequentialObservation) {
      const auto lps = method.log_probs_batch(es, rngs);
      for (std::size_t i = 0; i < n; ++i) {
        const auto np = nll_and_perplexity(lps[i]);
        ev.per_episode.push_back({start + i, np.nll, 0.0, 0.0});
        all_lp.insert(all_lp.end(), lps[i].begin(), lps[i].end());
      }
    } else {
      const auto maps = method.map_labels_batch(es, rngs);
      std::vector<EpisodeResult> rows(n);
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const bool scorable = es[i].length() >= 2;
        rows[i] = {start + i, 0.0, scorable ? ari(es[i].labels, maps[i]) : 1.0,
                   scorable ? ami(es[i].labels, maps[i]) : 1.0};
      }
      for (const auto& r : rows) {
        ari_sum += r.ari;
        ami_sum += r.ami;
        ev.per_episode.push_back(r);
      }
    }
  }
  if (setting == Setting::SequentialObservation) {
    // Mean over all timesteps of all episodes.
    const auto np = nll_and_perplexity(all_lp);
    ev.report.nll = np.nll;
    ev.report.perplexity = np.perplexity;
  } else {
    ev.report.ari = ari_sum / static_cast<double>(n_episodes);
    ev.report.ami = ami_sum / static_cast<double>(n_episodes);
  }
  return ev;
}

double time_method(const Method& method, const EpisodeSource& source, Setting setting, std::uint64_t seed,
                   const TimingOptions& opt) {
  if (!method.supports(setting))
    throw ConfigError("method " + method.name() + " does not support the " + std::string(to_string(setting)) +
                      " setting");
  if (opt.batches < 1 || opt.batch_size < 1) throw ConfigError("timing needs at least one batch of one sequence");
  const RngStream root(seed);
  const std::size_t total = opt.warmup + opt.batches * opt.batch_size;
  std::vector<Episode> es(total);
  std::vector<RngStream> rngs;
  for (std::size_t i = 0; i < total; ++i) {
    RngStream r = root.split(i).split(0);
    es[i] = source(r);
    rngs.push_back(root.split(i).split(1));
  }
  const int saved_threads = omp_get_max_threads();
  omp_set_num_threads(1);
  auto run = [&](std::size_t lo, std::size_t n) {
    std::span<const Episode> e(es.data() + lo, n);
    std::span<RngStream> r(rngs.data() + lo, n);
    if (setting == Setting::SequentialObservation)
      (void)method.log_probs_batch(e, r);
    else
      (void)method.map_labels_batch(e, r);
  };
  if (opt.warmup > 0) run(0, opt.warmup);
  std::vector<double> means;
  for (std::size_t b = 0; b < opt.batches; ++b) {
    const auto t0 = std::chrono::steady_clock::now();
    run(opt.warmup + b * opt.batch_size, opt.batch_size);
    const auto t1 = std::chrono::steady_clock::now();
    means.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(opt.batch_size));
  }
  omp_set_num_threads(saved_threads);
  std::sort(means.begin(), means.end());
  const std::size_t m = means.size();
  return m % 2 ? means[m / 2] : 0.5 * (means[m / 2 - 1] + means[m / 2]);
}

}  // namespace dpnc
