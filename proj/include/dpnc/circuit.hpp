#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpnc/autodiff.hpp"
#include "dpnc/episode.hpp"
#include "dpnc/rng.hpp"
#include "dpnc/tensor.hpp"

namespace dpnc {

/// What the circuit receives as its previous label when no true labels are
/// revealed.
enum class Feedback { OwnArgmax, Zeros };

/// Elementwise map applied to scaled observations. Symlog is
/// sign(x) * log(1 + |x|), for heavy-tailed features.
enum class InputTransform { Identity, Symlog };

struct CircuitConfig {
  std::size_t input_dim = 2;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t max_classes = 100;
  /// Observations are multiplied by this before entering the network.
  double input_scale = 1.0;
  InputTransform input_transform = InputTransform::Identity;
  Feedback feedback = Feedback::OwnArgmax;

  void validate() const;
  nlohmann::json to_json() const;
  static CircuitConfig from_json(const nlohmann::json& j);
  bool operator==(const CircuitConfig&) const = default;

  /// Network input for one observation value.
  double encode(double x) const {
    x *= input_scale;
    if (input_transform == InputTransform::Symlog) x = std::copysign(std::log1p(std::abs(x)), x);
    return x;
  }
};

/// Parameter tensors in a fixed declared order:
///   per layer l: l<l>.w_ih (3H x in_l), [layer 0 only: l0.w_label (C x 3H)],
///                l<l>.w_hh (3H x H), l<l>.b_ih (1 x 3H), l<l>.b_hh (1 x 3H)
///   head.w (C x H), head.b (1 x C)
/// Gate blocks inside every 3H dimension are ordered reset | update | candidate.
/// l0.w_label row k holds the input-weight columns of one-hot label k+1, so
/// selecting a row is the product of the input weights with the one-hot code.
template <typename T>
struct CircuitParams {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  std::size_t size() const { return tensors.size(); }
  std::size_t num_values() const;
  std::size_t index_of(const std::string& name) const;
  const Tensor<T>& operator[](const std::string& name) const { return tensors[index_of(name)]; }
  bool operator==(const CircuitParams&) const = default;
};

/// Names and shapes in declared order.
std::vector<std::pair<std::string, std::array<std::size_t, 2>>> circuit_layout(const CircuitConfig& cfg);

/// Weights uniform in +-1/sqrt(fan_in), biases zero.
template <typename T>
CircuitParams<T> circuit_init(const CircuitConfig& cfg, RngStream& rng);

/// All-zero parameters.
template <typename T>
CircuitParams<T> circuit_zeros(const CircuitConfig& cfg);

template <typename To, typename From>
CircuitParams<To> circuit_cast(const CircuitParams<From>& p) {
  CircuitParams<To> out;
  out.names = p.names;
  for (const auto& t : p.tensors) out.tensors.push_back(tensor_cast<To>(t));
  return out;
}

/// Hidden state of a single sequence.
template <typename T>
struct CircuitState {
  std::vector<std::vector<T>> h;  // one vector of size hidden per layer
  int last_label = 0;             // previous label fed at the next step (0 = none)
  int max_label = 0;              // largest label seen so far

  static CircuitState initial(const CircuitConfig& cfg);
  bool operator==(const CircuitState&) const = default;
};

/// One recurrent step on a single sequence. Uses state.last_label as the
/// previous-label input, advances the hidden state and returns raw logits
/// (max_classes entries). The caller sets last_label / max_label afterwards
/// through circuit_observe.
template <typename T>
std::vector<T> circuit_step(const CircuitParams<T>& params, const CircuitConfig& cfg, std::span<const double> x,
                            CircuitState<T>& state);

/// Records `label` as the next previous-label input.
template <typename T>
void circuit_observe(CircuitState<T>& state, int label, const CircuitConfig& cfg);

/// Additive mask row: 0 for labels 1..max_label+1, -infinity elsewhere.
template <typename T>
std::vector<T> circuit_mask(int max_label, std::size_t max_classes);

/// Teacher-forced loss on the tape: the mean over episodes of per-episode mean
/// NLL. `leaves` are the parameter variables (declared order). All episodes
/// must share one length.
template <typename T>
ad::Var<T> circuit_loss(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& leaves, const CircuitConfig& cfg,
                        std::span<const Episode> episodes);

/// Single-episode teacher-forced NLL and gradients (declared order) through the tape.
template <typename T>
T circuit_nll(const CircuitParams<T>& params, const CircuitConfig& cfg, const Episode& e,
              std::vector<Tensor<T>>* grads = nullptr);

/// Tape-free batched evaluation. Per episode, log p(z_t | ...) of the true
/// label at every step under teacher forcing.
template <typename T>
std::vector<std::vector<double>> circuit_log_probs(const CircuitParams<T>& params, const CircuitConfig& cfg,
                                                   std::span<const Episode> episodes);

/// Tape-free batched MAP labelling without label feedback from the data. At
/// each step the argmax of the masked predictive (lowest label on ties) is
/// emitted; cfg.feedback decides whether it is fed back as the previous label.
template <typename T>
std::vector<std::vector<int>> circuit_map_batch(const CircuitParams<T>& params, const CircuitConfig& cfg,
                                                std::span<const Episode> episodes);

template <typename T>
std::vector<int> circuit_map(const CircuitParams<T>& params, const CircuitConfig& cfg, const Episode& observations);

}  // namespace dpnc
