#pragma once

// Straightforward serial versions of the kernels in kernels.hpp. Kept for
// testing and benchmarking; nothing on the hot path calls them.

#include <cstddef>
#include <span>

#include "dpnc/kernels.hpp"

namespace dpnc::kernels::reference {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

template <typename T>
void add(std::span<const T> x, std::span<const T> y, std::span<T> out);
template <typename T>
void mul(std::span<const T> x, std::span<const T> y, std::span<T> out);
template <typename T>
void sigmoid(std::span<const T> x, std::span<T> out);
template <typename T>
void tanh(std::span<const T> x, std::span<T> out);
template <typename T>
void add_bias_rows(std::size_t rows, std::size_t cols, const T* x, const T* bias, T* out);
template <typename T>
void col_sum_acc(std::size_t rows, std::size_t cols, const T* x, T* acc);

}  // namespace dpnc::kernels::reference
