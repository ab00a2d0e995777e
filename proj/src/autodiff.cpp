#include "dpnc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include "dpnc/kernels.hpp"

namespace dpnc::ad {

using kernels::Trans;

namespace {
template <typename T>
void require(bool ok, const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!ok)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}

template <typename T>
bool is_masked(T m) {
  return m <= T(-1e29);
}
}  // namespace

// ---- Tape ----

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, {}, requires_grad});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
  bool rg = false;
  for (const auto& v : inputs) {
    if (v.tape != this) throw std::invalid_argument("autodiff: mixing variables from different tapes");
    rg = rg || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, rg ? std::move(backward) : Backward{}, rg});
  return {this, nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (!n.grad.empty() || n.value.empty()) return n.grad;
  zero_ = Tensor<T>(n.value.rows(), n.value.cols());
  return zero_;
}

template <typename T>
Tensor<T>& Tape<T>::grad_acc(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss is not on this tape");
  const Tensor<T>& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (!nodes_[loss.id].requires_grad) return;
  grad_acc(loss.id)[0] += T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

template <typename T>
void Tape<T>::zero_grad() {
  for (auto& n : nodes_) n.grad = Tensor<T>();
}

// ---- ops ----

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool transpose_b) {
  const auto& A = a.value();
  const auto& B = b.value();
  const std::size_t m = A.rows(), k = A.cols();
  const std::size_t n = transpose_b ? B.rows() : B.cols();
  require((transpose_b ? B.cols() : B.rows()) == k, "matmul", A, B);
  Tensor<T> C(m, n);
  kernels::gemm<T>(Trans::No, transpose_b ? Trans::Yes : Trans::No, m, n, k, T(1), A.data(), k, B.data(),
                   B.cols(), T(0), C.data(), n);
  return a.tape->record(std::move(C), {a, b}, [a, b, m, n, k, transpose_b](Tape<T>& tp, std::size_t self) {
    const auto& dC = tp.grad(self);
    const auto& A = tp.value(a.id);
    const auto& B = tp.value(b.id);
    if (tp.requires_grad(a.id)) {
      auto& dA = tp.grad_acc(a.id);
      if (transpose_b)
        kernels::gemm<T>(Trans::No, Trans::No, m, k, n, T(1), dC.data(), n, B.data(), k, T(1), dA.data(), k);
      else
        kernels::gemm<T>(Trans::No, Trans::Yes, m, k, n, T(1), dC.data(), n, B.data(), n, T(1), dA.data(), k);
    }
    if (tp.requires_grad(b.id)) {
      auto& dB = tp.grad_acc(b.id);
      if (transpose_b)
        kernels::gemm<T>(Trans::Yes, Trans::No, n, k, m, T(1), dC.data(), n, A.data(), k, T(1), dB.data(), k);
      else
        kernels::gemm<T>(Trans::Yes, Trans::No, k, n, m, T(1), A.data(), k, dC.data(), n, T(1), dB.data(), n);
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require(a.value().same_shape(b.value()), "add", a.value(), b.value());
  Tensor<T> out(a.rows(), a.cols());
  kernels::add<T>(a.value().values(), b.value().values(), out.values());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.requires_grad(a.id)) kernels::axpy<T>(T(1), g.values(), tp.grad_acc(a.id).values());
    if (tp.requires_grad(b.id)) kernels::axpy<T>(T(1), g.values(), tp.grad_acc(b.id).values());
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require(a.value().same_shape(b.value()), "sub", a.value(), b.value());
  Tensor<T> out(a.rows(), a.cols());
  kernels::sub<T>(a.value().values(), b.value().values(), out.values());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.requires_grad(a.id)) kernels::axpy<T>(T(1), g.values(), tp.grad_acc(a.id).values());
    if (tp.requires_grad(b.id)) kernels::axpy<T>(T(-1), g.values(), tp.grad_acc(b.id).values());
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require(a.value().same_shape(b.value()), "mul", a.value(), b.value());
  Tensor<T> out(a.rows(), a.cols());
  kernels::mul<T>(a.value().values(), b.value().values(), out.values());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.requires_grad(a.id)) kernels::fma_acc<T>(g.values(), tp.value(b.id).values(), tp.grad_acc(a.id).values());
    if (tp.requires_grad(b.id)) kernels::fma_acc<T>(g.values(), tp.value(a.id).values(), tp.grad_acc(b.id).values());
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out(a.rows(), a.cols());
  auto av = a.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * av[i];
  return a.tape->record(std::move(out), {a}, [a, s](Tape<T>& tp, std::size_t self) {
    kernels::axpy<T>(s, tp.grad(self).values(), tp.grad_acc(a.id).values());
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out(a.rows(), a.cols());
  kernels::sigmoid<T>(a.value().values(), out.values());
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tp, std::size_t self) {
    kernels::sigmoid_backward<T>(tp.value(self).values(), tp.grad(self).values(), tp.grad_acc(a.id).values());
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  Tensor<T> out(a.rows(), a.cols());
  kernels::tanh<T>(a.value().values(), out.values());
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tp, std::size_t self) {
    kernels::tanh_backward<T>(tp.value(self).values(), tp.grad(self).values(), tp.grad_acc(a.id).values());
  });
}

template <typename T>
Var<T> concat(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.rows() == B.rows(), "concat", A, B);
  const std::size_t ca = A.cols(), cb = B.cols(), rows = A.rows();
  Tensor<T> out(rows, ca + cb);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(A.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(B.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, ca, cb, rows](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.requires_grad(a.id)) {
      auto& dA = tp.grad_acc(a.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) dA(r, c) += g(r, c);
    }
    if (tp.requires_grad(b.id)) {
      auto& dB = tp.grad_acc(b.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) dB(r, c) += g(r, ca + c);
    }
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  const auto& A = a.value();
  if (begin + count > A.cols()) throw std::invalid_argument("slice_cols: range exceeds column count");
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor<T> out(rows, count);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(A.data() + r * cols + begin, count, out.data() + r * count);
  return a.tape->record(std::move(out), {a}, [a, begin, count, rows, cols](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& dA = tp.grad_acc(a.id);
    for (std::size_t r = 0; r < rows; ++r) {
      T* d = dA.data() + r * cols + begin;
      const T* s = g.data() + r * count;
      for (std::size_t c = 0; c < count; ++c) d[c] += s[c];
    }
  });
}

template <typename T>
Var<T> row_select(Var<T> table, std::span<const int> indices) {
  const auto& W = table.value();
  const std::size_t cols = W.cols();
  std::vector<int> idx(indices.begin(), indices.end());
  Tensor<T> out(idx.size(), cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < -1 || idx[r] >= static_cast<int>(W.rows()))
      throw std::invalid_argument("row_select: index " + std::to_string(idx[r]) + " out of range");
    if (idx[r] >= 0) std::copy_n(W.data() + static_cast<std::size_t>(idx[r]) * cols, cols, out.data() + r * cols);
  }
  return table.tape->record(std::move(out), {table}, [table, idx = std::move(idx), cols](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& dW = tp.grad_acc(table.id);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      T* d = dW.data() + static_cast<std::size_t>(idx[r]) * cols;
      const T* s = g.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) d[c] += s[c];
    }
  });
}

template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias) {
  const auto& A = a.value();
  const auto& b = bias.value();
  require(b.rows() == 1 && b.cols() == A.cols(), "add_bias", A, b);
  Tensor<T> out(A.rows(), A.cols());
  kernels::add_bias_rows<T>(A.rows(), A.cols(), A.data(), b.data(), out.data());
  return a.tape->record(std::move(out), {a, bias}, [a, bias](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.requires_grad(a.id)) kernels::axpy<T>(T(1), g.values(), tp.grad_acc(a.id).values());
    if (tp.requires_grad(bias.id)) kernels::col_sum_acc<T>(g.rows(), g.cols(), g.data(), tp.grad_acc(bias.id).data());
  });
}

template <typename T>
Var<T> gru_cell(Var<T> gi, Var<T> gh, Var<T> h) {
  const auto& GI = gi.value();
  const auto& GH = gh.value();
  const auto& Hp = h.value();
  const std::size_t B = Hp.rows(), H = Hp.cols();
  require(GI.same_shape(GH) && GI.rows() == B && GI.cols() == 3 * H, "gru_cell", GI, Hp);
  // gates holds r | z | n per row, kept for the backward pass.
  auto gates = std::make_shared<Tensor<T>>(B, 3 * H);
  Tensor<T> out(B, H);
  for (std::size_t b = 0; b < B; ++b) {
    const T* xi = GI.data() + b * 3 * H;
    const T* xh = GH.data() + b * 3 * H;
    const T* hp = Hp.data() + b * H;
    T* g = gates->data() + b * 3 * H;
    T* o = out.data() + b * H;
    for (std::size_t j = 0; j < H; ++j) {
      const T r = T(1) / (T(1) + std::exp(-(xi[j] + xh[j])));
      const T z = T(1) / (T(1) + std::exp(-(xi[H + j] + xh[H + j])));
      const T n = std::tanh(xi[2 * H + j] + r * xh[2 * H + j]);
      g[j] = r;
      g[H + j] = z;
      g[2 * H + j] = n;
      o[j] = n + z * (hp[j] - n);
    }
  }
  return gi.tape->record(std::move(out), {gi, gh, h}, [gi, gh, h, gates, B, H](Tape<T>& tp, std::size_t self) {
    const auto& dO = tp.grad(self);
    const auto& GH = tp.value(gh.id);
    const auto& Hp = tp.value(h.id);
    T* dGI = tp.requires_grad(gi.id) ? tp.grad_acc(gi.id).data() : nullptr;
    T* dGH = tp.requires_grad(gh.id) ? tp.grad_acc(gh.id).data() : nullptr;
    T* dH = tp.requires_grad(h.id) ? tp.grad_acc(h.id).data() : nullptr;
    for (std::size_t b = 0; b < B; ++b) {
      const T* g = gates->data() + b * 3 * H;
      const T* xh = GH.data() + b * 3 * H;
      const T* hp = Hp.data() + b * H;
      const T* d = dO.data() + b * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T r = g[j], z = g[H + j], n = g[2 * H + j];
        const T dn = d[j] * (T(1) - z) * (T(1) - n * n);
        const T dz = d[j] * (hp[j] - n) * z * (T(1) - z);
        const T dr = dn * xh[2 * H + j] * r * (T(1) - r);
        if (dGI) {
          T* o = dGI + b * 3 * H;
          o[j] += dr;
          o[H + j] += dz;
          o[2 * H + j] += dn;
        }
        if (dGH) {
          T* o = dGH + b * 3 * H;
          o[j] += dr;
          o[H + j] += dz;
          o[2 * H + j] += dn * r;
        }
        if (dH) dH[b * H + j] += d[j] * z;
      }
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value().values()) s += v;
  return a.tape->record(Tensor<T>::scalar(s), {a}, [a](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad(self)[0];
    for (T& d : tp.grad_acc(a.id).values()) d += g;
  });
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& logits, const Tensor<T>& mask) {
  if (!logits.same_shape(mask)) throw std::invalid_argument("masked_softmax: mask shape mismatch");
  const std::size_t rows = logits.rows(), cols = logits.cols();
  Tensor<T> p(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (is_masked(mask(r, c))) continue;
      any = true;
      mx = std::max(mx, logits(r, c) + mask(r, c));
    }
    if (!any) throw std::invalid_argument("masked_softmax: every entry of row " + std::to_string(r) + " is masked");
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      // Masked entries act as an additive -1e30 and are then zeroed exactly.
      const T v = is_masked(mask(r, c)) ? T(0) : std::exp(logits(r, c) + mask(r, c) - mx);
      p(r, c) = v;
      z += v;
    }
    for (std::size_t c = 0; c < cols; ++c) p(r, c) /= z;
  }
  return p;
}

template <typename T>
Var<T> masked_softmax_nll(Var<T> logits, const Tensor<T>& mask, std::span<const int> targets) {
  const auto& L = logits.value();
  if (!L.same_shape(mask)) throw std::invalid_argument("masked_softmax_nll: mask shape mismatch");
  if (targets.size() != L.rows()) throw std::invalid_argument("masked_softmax_nll: one target per row required");
  const std::size_t rows = L.rows(), cols = L.cols();
  auto probs = std::make_shared<Tensor<T>>(rows, cols);
  std::vector<int> tgt(targets.begin(), targets.end());
  T loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = tgt[r];
    if (t < 0) continue;
    if (t >= static_cast<int>(cols)) throw std::invalid_argument("masked_softmax_nll: target out of range");
    if (is_masked(mask(r, static_cast<std::size_t>(t))))
      throw std::invalid_argument("masked_softmax_nll: target " + std::to_string(t) + " is masked in row " +
                                  std::to_string(r));
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (!is_masked(mask(r, c))) mx = std::max(mx, L(r, c) + mask(r, c));
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const T v = is_masked(mask(r, c)) ? T(0) : std::exp(L(r, c) + mask(r, c) - mx);
      (*probs)(r, c) = v;
      z += v;
    }
    for (std::size_t c = 0; c < cols; ++c) (*probs)(r, c) /= z;
    loss += -(L(r, static_cast<std::size_t>(t)) + mask(r, static_cast<std::size_t>(t)) - mx - std::log(z));
  }
  return logits.tape->record(Tensor<T>::scalar(loss), {logits},
                             [logits, probs, tgt = std::move(tgt), cols](Tape<T>& tp, std::size_t self) {
                               const T g = tp.grad(self)[0];
                               auto& dL = tp.grad_acc(logits.id);
                               for (std::size_t r = 0; r < tgt.size(); ++r) {
                                 if (tgt[r] < 0) continue;
                                 for (std::size_t c = 0; c < cols; ++c) dL(r, c) += g * (*probs)(r, c);
                                 dL(r, static_cast<std::size_t>(tgt[r])) -= g;
                               }
                             });
}

#define DPNC_INSTANTIATE(T)                                                       \
  template class Tape<T>;                                                         \
  template struct Var<T>;                                                         \
  template Var<T> matmul<T>(Var<T>, Var<T>, bool);                                \
  template Var<T> add<T>(Var<T>, Var<T>);                                         \
  template Var<T> sub<T>(Var<T>, Var<T>);                                         \
  template Var<T> mul<T>(Var<T>, Var<T>);                                         \
  template Var<T> scale<T>(Var<T>, T);                                            \
  template Var<T> sigmoid<T>(Var<T>);                                             \
  template Var<T> tanh<T>(Var<T>);                                                \
  template Var<T> concat<T>(Var<T>, Var<T>);                                      \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);               \
  template Var<T> row_select<T>(Var<T>, std::span<const int>);                    \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                                    \
  template Var<T> sum<T>(Var<T>);                                                 \
  template Var<T> gru_cell<T>(Var<T>, Var<T>, Var<T>);                            \
  template Var<T> masked_softmax_nll<T>(Var<T>, const Tensor<T>&, std::span<const int>); \
  template Tensor<T> masked_softmax<T>(const Tensor<T>&, const Tensor<T>&);

DPNC_INSTANTIATE(float)
DPNC_INSTANTIATE(double)

}  // namespace dpnc::ad
