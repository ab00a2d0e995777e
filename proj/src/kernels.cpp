#define EIGEN_DONT_PARALLELIZE
#include "dpnc/kernels.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace dpnc::kernels {

namespace {
// Fixed tile shape for gemm. Changing these changes rounding, not results'
// dependence on thread count.
constexpr std::size_t kTileM = 128;
constexpr std::size_t kTileN = 768;
constexpr std::size_t kParallelFlops = std::size_t{1} << 18;
constexpr std::ptrdiff_t kParallelElems = std::ptrdiff_t{1} << 15;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
}  // namespace

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  const auto ar = static_cast<Eigen::Index>(ta == Trans::No ? m : k);
  const auto ac = static_cast<Eigen::Index>(ta == Trans::No ? k : m);
  const auto br = static_cast<Eigen::Index>(tb == Trans::No ? k : n);
  const auto bc = static_cast<Eigen::Index>(tb == Trans::No ? n : k);
  ConstMap<T> A(a, ar, ac, Eigen::OuterStride<>(static_cast<Eigen::Index>(lda)));
  ConstMap<T> B(b, br, bc, Eigen::OuterStride<>(static_cast<Eigen::Index>(ldb)));
  MutMap<T> C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n),
              Eigen::OuterStride<>(static_cast<Eigen::Index>(ldc)));

  const std::ptrdiff_t mt = static_cast<std::ptrdiff_t>((m + kTileM - 1) / kTileM);
  const std::ptrdiff_t nt = static_cast<std::ptrdiff_t>((n + kTileN - 1) / kTileN);
  const bool parallel = m * n * k > kParallelFlops && mt * nt > 1;

#pragma omp parallel for collapse(2) schedule(static) if (parallel)
  for (std::ptrdiff_t ti = 0; ti < mt; ++ti) {
    for (std::ptrdiff_t tj = 0; tj < nt; ++tj) {
      const auto i0 = static_cast<Eigen::Index>(ti * kTileM);
      const auto j0 = static_cast<Eigen::Index>(tj * kTileN);
      const auto mi = std::min<Eigen::Index>(kTileM, static_cast<Eigen::Index>(m) - i0);
      const auto nj = std::min<Eigen::Index>(kTileN, static_cast<Eigen::Index>(n) - j0);
      auto cb = C.block(i0, j0, mi, nj);
      if (beta == T(0))
        cb.setZero();
      else if (beta != T(1))
        cb *= beta;
      if (k == 0) continue;
      if (ta == Trans::No && tb == Trans::No)
        cb.noalias() += alpha * (A.middleRows(i0, mi) * B.middleCols(j0, nj));
      else if (ta == Trans::No)
        cb.noalias() += alpha * (A.middleRows(i0, mi) * B.middleRows(j0, nj).transpose());
      else if (tb == Trans::No)
        cb.noalias() += alpha * (A.middleCols(i0, mi).transpose() * B.middleCols(j0, nj));
      else
        cb.noalias() += alpha * (A.middleCols(i0, mi).transpose() * B.middleRows(j0, nj).transpose());
    }
  }
}

#define DPNC_ELEMENTWISE(expr)                                                         \
  const auto n = static_cast<std::ptrdiff_t>(out.size());                              \
  _Pragma("omp parallel for simd schedule(static) if (n > kParallelElems)") for (      \
      std::ptrdiff_t i = 0; i < n; ++i) out[i] = (expr);

template <typename T>
void add(std::span<const T> x, std::span<const T> y, std::span<T> out) {
  DPNC_ELEMENTWISE(x[i] + y[i])
}
template <typename T>
void sub(std::span<const T> x, std::span<const T> y, std::span<T> out) {
  DPNC_ELEMENTWISE(x[i] - y[i])
}
template <typename T>
void mul(std::span<const T> x, std::span<const T> y, std::span<T> out) {
  DPNC_ELEMENTWISE(x[i] * y[i])
}
template <typename T>
void sigmoid(std::span<const T> x, std::span<T> out) {
  DPNC_ELEMENTWISE(T(1) / (T(1) + std::exp(-x[i])))
}
template <typename T>
void tanh(std::span<const T> x, std::span<T> out) {
  DPNC_ELEMENTWISE(std::tanh(x[i]))
}
template <typename T>
void axpy(T s, std::span<const T> x, std::span<T> acc) {
  auto out = acc;
  DPNC_ELEMENTWISE(acc[i] + s * x[i])
}
template <typename T>
void fma_acc(std::span<const T> x, std::span<const T> y, std::span<T> acc) {
  auto out = acc;
  DPNC_ELEMENTWISE(acc[i] + x[i] * y[i])
}
template <typename T>
void sigmoid_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx) {
  auto out = dx;
  DPNC_ELEMENTWISE(dx[i] + dy[i] * y[i] * (T(1) - y[i]))
}
template <typename T>
void tanh_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx) {
  auto out = dx;
  DPNC_ELEMENTWISE(dx[i] + dy[i] * (T(1) - y[i] * y[i]))
}

#undef DPNC_ELEMENTWISE

template <typename T>
void add_bias_rows(std::size_t rows, std::size_t cols, const T* x, const T* bias, T* out) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (static_cast<std::ptrdiff_t>(rows * cols) > kParallelElems)
  for (std::ptrdiff_t i = 0; i < r; ++i) {
    const T* xr = x + i * cols;
    T* o = out + i * cols;
#pragma omp simd
    for (std::size_t j = 0; j < cols; ++j) o[j] = xr[j] + bias[j];
  }
}

template <typename T>
void col_sum_acc(std::size_t rows, std::size_t cols, const T* x, T* acc) {
  constexpr std::size_t kCols = 64;
  const auto tiles = static_cast<std::ptrdiff_t>((cols + kCols - 1) / kCols);
#pragma omp parallel for schedule(static) if (static_cast<std::ptrdiff_t>(rows * cols) > kParallelElems)
  for (std::ptrdiff_t t = 0; t < tiles; ++t) {
    const std::size_t c0 = static_cast<std::size_t>(t) * kCols;
    const std::size_t c1 = std::min(cols, c0 + kCols);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = x + r * cols;
#pragma omp simd
      for (std::size_t c = c0; c < c1; ++c) acc[c] += xr[c];
    }
  }
}

#define DPNC_INSTANTIATE(T)                                                                                   \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t,       \
                        const T*, std::size_t, T, T*, std::size_t);                                           \
  template void add<T>(std::span<const T>, std::span<const T>, std::span<T>);                                 \
  template void sub<T>(std::span<const T>, std::span<const T>, std::span<T>);                                 \
  template void mul<T>(std::span<const T>, std::span<const T>, std::span<T>);                                 \
  template void axpy<T>(T, std::span<const T>, std::span<T>);                                                 \
  template void fma_acc<T>(std::span<const T>, std::span<const T>, std::span<T>);                             \
  template void sigmoid<T>(std::span<const T>, std::span<T>);                                                 \
  template void tanh<T>(std::span<const T>, std::span<T>);                                                    \
  template void sigmoid_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);                    \
  template void tanh_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);                       \
  template void add_bias_rows<T>(std::size_t, std::size_t, const T*, const T*, T*);                           \
  template void col_sum_acc<T>(std::size_t, std::size_t, const T*, T*);

DPNC_INSTANTIATE(float)
DPNC_INSTANTIATE(double)

}  // namespace dpnc::kernels
