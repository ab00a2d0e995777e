#include "dpnc/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dpnc {

template <typename T>
AdamState<T>::AdamState(AdamConfig cfg, const std::vector<Tensor<T>>& params) : config(cfg) {
  for (const auto& p : params) {
    m.emplace_back(p.rows(), p.cols());
    v.emplace_back(p.rows(), p.cols());
  }
}

template <typename T>
bool adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.m[i]))
      throw std::invalid_argument("adam_step: shape mismatch at parameter " + std::to_string(i));
    for (T g : grads[i].values())
      if (!std::isfinite(g)) return false;
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(c.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].data();
    const T* g = grads[i].data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    const std::size_t n = params[i].size();
#pragma omp simd
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
  return true;
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::int64_t step, const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t j = 0; j < params.size(); ++j) {
    m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grads[j];
    v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grads[j] * grads[j];
    params[j] -= cfg.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.epsilon);
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template bool adam_step<float>(std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&, AdamState<float>&);
template bool adam_step<double>(std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&, AdamState<double>&);

}  // namespace dpnc
