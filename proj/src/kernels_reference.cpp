#include "dpnc/kernels_reference.hpp"

#include <cmath>
#include <vector>

namespace dpnc::kernels::reference {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = ta == Trans::No ? a[i * lda + p] : a[p * lda + i];
        const T bv = tb == Trans::No ? b[p * ldb + j] : b[j * ldb + p];
        s += av * bv;
      }
      T& out = c[i * ldc + j];
      out = alpha * s + (beta == T(0) ? T(0) : beta * out);
    }
  }
}

template <typename T>
void add(std::span<const T> x, std::span<const T> y, std::span<T> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
}
template <typename T>
void mul(std::span<const T> x, std::span<const T> y, std::span<T> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
}
template <typename T>
void sigmoid(std::span<const T> x, std::span<T> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
}
template <typename T>
void tanh(std::span<const T> x, std::span<T> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
}
template <typename T>
void add_bias_rows(std::size_t rows, std::size_t cols, const T* x, const T* bias, T* out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + bias[c];
}
template <typename T>
void col_sum_acc(std::size_t rows, std::size_t cols, const T* x, T* acc) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) acc[c] += x[r * cols + c];
}

#define DPNC_INSTANTIATE(T)                                                                             \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t, \
                        const T*, std::size_t, T, T*, std::size_t);                                     \
  template void add<T>(std::span<const T>, std::span<const T>, std::span<T>);                           \
  template void mul<T>(std::span<const T>, std::span<const T>, std::span<T>);                           \
  template void sigmoid<T>(std::span<const T>, std::span<T>);                                           \
  template void tanh<T>(std::span<const T>, std::span<T>);                                              \
  template void add_bias_rows<T>(std::size_t, std::size_t, const T*, const T*, T*);                     \
  template void col_sum_acc<T>(std::size_t, std::size_t, const T*, T*);

DPNC_INSTANTIATE(float)
DPNC_INSTANTIATE(double)

}  // namespace dpnc::kernels::reference
