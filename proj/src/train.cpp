#include "dpnc/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "dpnc/error.hpp"

namespace dpnc {

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("train.batch must be at least 1");
  if (length < 1) throw ConfigError("train.T must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (shard < 1) throw ConfigError("train.shard must be at least 1");
  if (clip_norm < 0.0) throw ConfigError("train.clip_norm must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"steps", steps},         {"batch", batch}, {"T", length},   {"lr", lr},
          {"seed", seed},           {"clip_norm", clip_norm},          {"shard", shard},
          {"checkpoint_every", checkpoint_every},     {"data", data}};
}

CircuitParams<float> initial_params(const CircuitConfig& circuit, std::uint64_t seed) {
  RngStream init = RngStream(seed).split(std::numeric_limits<std::uint64_t>::max());
  return circuit_init<float>(circuit, init);
}

namespace {

nlohmann::json comparable(const nlohmann::json& train) {
  nlohmann::json j = train;
  j.erase("steps");
  j.erase("checkpoint_every");
  return j;
}

double now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

TrainResult run(CircuitParams<float> params, AdamState<float> adam, std::size_t start, const TrainConfig& cfg,
                const CircuitConfig& circuit, const EpisodeSource& source, const TrainHooks& hooks) {
  TrainResult res;
  const RngStream root(cfg.seed);
  const std::size_t n_shards = (cfg.batch + cfg.shard - 1) / cfg.shard;
  const std::size_t P = params.size();
  std::vector<Episode> batch(cfg.batch);
  std::vector<std::vector<Tensor<float>>> shard_grads(n_shards);
  std::vector<double> shard_loss(n_shards);

  auto save = [&](std::size_t step) {
    if (cfg.checkpoint_path.empty()) return;
    Checkpoint ck;
    ck.circuit = circuit;
    ck.train = cfg.to_json();
    ck.step = step;
    ck.seed = cfg.seed;
    ck.params = params;
    ck.adam = adam;
    save_checkpoint(cfg.checkpoint_path, ck);
  };

  for (std::size_t step = start; step < cfg.steps; ++step) {
    const double t0 = now_ms();
    const RngStream step_root = root.split(step);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(cfg.batch); ++i) {
      RngStream r = step_root.split(static_cast<std::uint64_t>(i));
      batch[static_cast<std::size_t>(i)] = source(r);
    }
    for (const auto& e : batch)
      if (e.length() != cfg.length)
        throw DataError("episode source produced length " + std::to_string(e.length()) + ", expected " +
                        std::to_string(cfg.length));

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(n_shards); ++s) {
      const std::size_t lo = static_cast<std::size_t>(s) * cfg.shard;
      const std::size_t hi = std::min(cfg.batch, lo + cfg.shard);
      ad::Tape<float> tape;
      std::vector<ad::Var<float>> leaves;
      for (const auto& t : params.tensors) leaves.push_back(tape.leaf(t));
      auto loss = circuit_loss(tape, leaves, circuit, std::span<const Episode>(batch.data() + lo, hi - lo));
      tape.backward(loss);
      auto& g = shard_grads[static_cast<std::size_t>(s)];
      g.clear();
      for (const auto& v : leaves) g.push_back(v.grad());
      shard_loss[static_cast<std::size_t>(s)] = loss.value().item();
    }

    // Shard losses are shard means; weight them by shard size.
    double loss = 0.0;
    std::vector<Tensor<float>> grads = shard_grads[0];
    for (std::size_t s = 0; s < n_shards; ++s) {
      const std::size_t lo = s * cfg.shard, hi = std::min(cfg.batch, lo + cfg.shard);
      const float w = static_cast<float>(hi - lo) / static_cast<float>(cfg.batch);
      loss += shard_loss[s] * (hi - lo) / static_cast<double>(cfg.batch);
      for (std::size_t p = 0; p < P; ++p) {
        auto dst = grads[p].values();
        auto src = shard_grads[s][p].values();
        if (s == 0)
          for (auto& v : dst) v *= w;
        else
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w * src[k];
      }
    }

    if (!std::isfinite(loss)) {
      std::string bad;
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        const CircuitParams<float>& pp = params;
        if (!std::isfinite(circuit_nll(pp, circuit, batch[i]))) bad += (bad.empty() ? "" : ",") + std::to_string(i);
      }
      throw NumericError("non-finite training loss at step " + std::to_string(step + 1) + " (root seed " +
                         std::to_string(cfg.seed) + ", episode stream split(" + std::to_string(step) +
                         ").split(slot), offending slots: " + (bad.empty() ? "none isolated" : bad) + ")");
    }

    if (cfg.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads)
        for (float v : g.values()) sq += static_cast<double>(v) * v;
      const double norm = std::sqrt(sq);
      if (norm > cfg.clip_norm) {
        const float f = static_cast<float>(cfg.clip_norm / norm);
        for (auto& g : grads)
          for (float& v : g.values()) v *= f;
      }
    }
    if (!adam_step(params.tensors, grads, adam)) ++res.skipped_steps;

    const TrainLogRow row{step + 1, loss, now_ms() - t0};
    res.log.push_back(row);
    if (hooks.on_step) hooks.on_step(row);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 != cfg.steps) save(step + 1);
  }
  save(std::max(cfg.steps, start));
  res.params = std::move(params);
  res.adam = std::move(adam);
  return res;
}

}  // namespace

TrainResult train_circuit(const TrainConfig& cfg, const CircuitConfig& circuit, const EpisodeSource& source,
                          const TrainHooks& hooks) {
  cfg.validate();
  circuit.validate();
  if (circuit.max_classes < cfg.length)
    throw ConfigError("circuit.max_classes (" + std::to_string(circuit.max_classes) + ") must be at least train.T (" +
                      std::to_string(cfg.length) + ")");
  auto params = initial_params(circuit, cfg.seed);
  AdamConfig ac;
  ac.lr = cfg.lr;
  AdamState<float> adam(ac, params.tensors);
  return run(std::move(params), std::move(adam), 0, cfg, circuit, source, hooks);
}

TrainResult resume_training(const Checkpoint& from, const TrainConfig& cfg, const CircuitConfig& circuit,
                            const EpisodeSource& source, bool allow_override, const TrainHooks& hooks) {
  cfg.validate();
  if (!from.adam) throw ConfigError("checkpoint has no optimizer state; cannot resume");
  if (!allow_override) {
    std::vector<std::string> diffs;
    if (!(from.circuit == circuit)) diffs.push_back("circuit");
    const auto a = comparable(from.train), b = comparable(cfg.to_json());
    for (const auto& [k, v] : b.items())
      if (!a.contains(k) || a.at(k) != v) diffs.push_back("train." + k);
    for (const auto& [k, v] : a.items())
      if (!b.contains(k)) diffs.push_back("train." + k);
    if (!diffs.empty()) {
      std::string msg = "config mismatch with checkpoint:";
      for (const auto& d : diffs) msg += " " + d;
      throw ConfigError(msg + " (pass the override flag to resume anyway)");
    }
  }
  if (!(from.circuit == circuit) && circuit_layout(from.circuit) != circuit_layout(circuit))
    throw ConfigError("config mismatch: checkpoint parameters do not fit the requested circuit shape");
  AdamState<float> adam = *from.adam;
  adam.config.lr = cfg.lr;
  return run(from.params, std::move(adam), static_cast<std::size_t>(from.step), cfg, circuit, source, hooks);
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows, bool append) {
  const bool header = !append || !std::filesystem::exists(path);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write training log " + path);
  if (header) out << "step,loss,ms_per_step\n";
  out.precision(9);
  for (const auto& r : rows) out << r.step << ',' << r.loss << ',' << r.ms_per_step << '\n';
}

}  // namespace dpnc
