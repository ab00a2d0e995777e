#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpnc/adam.hpp"
#include "dpnc/checkpoint.hpp"
#include "dpnc/circuit.hpp"
#include "dpnc/simgen.hpp"

namespace dpnc {

struct TrainConfig {
  std::size_t steps = 10000;
  std::size_t batch = 128;
  std::size_t length = 100;  // T
  double lr = 0.001;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::string checkpoint_path;       // empty: no checkpoints
  /// Global-norm gradient clipping; 0 disables it.
  double clip_norm = 0.0;
  /// Episodes per forward/backward shard. Shards may run in parallel; the
  /// shard layout, not the thread count, fixes the summation order.
  std::size_t shard = 64;
  /// Free-form description of the episode generator, stored in checkpoints
  /// and compared on resume.
  nlohmann::json data = nlohmann::json::object();

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainLogRow {
  std::size_t step = 0;
  double loss = 0.0;
  double ms_per_step = 0.0;
};

struct TrainResult {
  CircuitParams<float> params;
  AdamState<float> adam;
  std::vector<TrainLogRow> log;   // one row per step run in this call
  std::size_t skipped_steps = 0;  // optimizer steps rejected for non-finite gradients
};

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_step;
};

/// Training from scratch. Episode for step s (0-based), slot i is drawn from
/// RngStream(seed).split(s).split(i); initial parameters come from a stream
/// no step uses. Throws NumericError on a non-finite loss, naming the step and
/// the offending slots.
TrainResult train_circuit(const TrainConfig& cfg, const CircuitConfig& circuit, const EpisodeSource& source,
                          const TrainHooks& hooks = {});

/// Continues a run from a checkpoint up to cfg.steps. Unless `allow_override`,
/// any difference between cfg/circuit and the checkpoint's stored settings
/// (other than the step budget and checkpoint cadence/path) raises ConfigError
/// starting with "config mismatch".
TrainResult resume_training(const Checkpoint& from, const TrainConfig& cfg, const CircuitConfig& circuit,
                            const EpisodeSource& source, bool allow_override, const TrainHooks& hooks = {});

/// Initial parameters used by train_circuit for this seed.
CircuitParams<float> initial_params(const CircuitConfig& circuit, std::uint64_t seed);

/// CSV with header "step,loss,ms_per_step".
void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows, bool append);

}  // namespace dpnc
