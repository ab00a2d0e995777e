#pragma once

// Dense row-major kernels used by the autodiff engine and circuit inference.
//
// Work is split into fixed-size tiles that do not depend on the thread count,
// and every output element is produced by exactly one tile, so results are
// bit-identical for any OMP_NUM_THREADS. Serial counterparts with the same
// signatures live in kernels_reference.hpp and are the test oracle.

#include <cstddef>
#include <span>

namespace dpnc::kernels {

enum class Trans { No, Yes };

/// C = alpha * op(A) op(B) + beta * C, with op(A) M x K and op(B) K x N.
/// Leading dimensions are the row strides of the stored matrices.
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

template <typename T>
void add(std::span<const T> x, std::span<const T> y, std::span<T> out);
template <typename T>
void sub(std::span<const T> x, std::span<const T> y, std::span<T> out);
template <typename T>
void mul(std::span<const T> x, std::span<const T> y, std::span<T> out);
/// acc += s * x
template <typename T>
void axpy(T s, std::span<const T> x, std::span<T> acc);
/// acc += x * y
template <typename T>
void fma_acc(std::span<const T> x, std::span<const T> y, std::span<T> acc);

template <typename T>
void sigmoid(std::span<const T> x, std::span<T> out);
template <typename T>
void tanh(std::span<const T> x, std::span<T> out);
/// dx += dy * y * (1 - y), where y = sigmoid(x)
template <typename T>
void sigmoid_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx);
/// dx += dy * (1 - y^2), where y = tanh(x)
template <typename T>
void tanh_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx);

/// out[r, :] = x[r, :] + bias for each of `rows` rows.
template <typename T>
void add_bias_rows(std::size_t rows, std::size_t cols, const T* x, const T* bias, T* out);
/// acc[c] += sum_r x[r, c]
template <typename T>
void col_sum_acc(std::size_t rows, std::size_t cols, const T* x, T* acc);

/// Number of threads the parallel kernels may use.
int max_threads();
void set_threads(int n);

}  // namespace dpnc::kernels
