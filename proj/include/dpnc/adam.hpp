#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dpnc/tensor.hpp"

namespace dpnc {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter tensors.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  AdamState() = default;
  AdamState(AdamConfig cfg, const std::vector<Tensor<T>>& params);
};

/// Applies one update in place. Returns false and leaves params, moments and
/// the step counter untouched when any gradient entry is non-finite.
/// Throws std::invalid_argument on shape mismatch.
template <typename T>
bool adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state);

/// Flat-vector form of the same update, used for low-dimensional problems
/// (conjugate hyperparameter fitting). `step` is the 1-based step number.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::int64_t step, const AdamConfig& cfg);

}  // namespace dpnc
