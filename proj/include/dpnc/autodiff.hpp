#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// Every op evaluates eagerly and, when any input needs a gradient, appends a
// node to the tape holding its value and a closure that pushes the output
// gradient back to its inputs. backward() walks the tape once in reverse
// recording order, which is a valid topological order.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "dpnc/tensor.hpp"

namespace dpnc::ad {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Tensor<T>& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Records a computed value. `inputs` are only used to decide whether the
  /// node needs a gradient; `backward` reads grad(self) and accumulates into
  /// the inputs through grad_acc().
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of node `id`; a zero tensor of matching shape if nothing flowed.
  const Tensor<T>& grad(std::size_t id) const;
  /// Mutable gradient buffer, allocated (zeroed) on first use. Only call for
  /// nodes with requires_grad.
  Tensor<T>& grad_acc(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1 x 1.
  void backward(Var<T> loss);
  void zero_grad();
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;  // references to values stay valid while the tape grows
  mutable Tensor<T> zero_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}
template <typename T>
const Tensor<T>& Var<T>::grad() const {
  return tape->grad(id);
}

/// a (m x k) times b (k x n), or a times b^T when transpose_b (b is n x k).
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool transpose_b = false);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T s);
template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> tanh(Var<T> a);
/// Concatenation along columns (the last axis).
template <typename T>
Var<T> concat(Var<T> a, Var<T> b);
/// Columns [begin, begin + count).
template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count);
/// Row i of the output is table[indices[i]]; index -1 yields a zero row.
template <typename T>
Var<T> row_select(Var<T> table, std::span<const int> indices);
/// Adds the 1 x n row vector `bias` to every row of a.
template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias);
template <typename T>
Var<T> sum(Var<T> a);
/// Fused GRU update. gi and gh are the B x 3H input and hidden projections
/// (biases included) laid out as reset | update | candidate blocks; h is B x H.
///   r = sigmoid(gi_r + gh_r), z = sigmoid(gi_z + gh_z)
///   n = tanh(gi_n + r * gh_n), h' = n + z * (h - n)
template <typename T>
Var<T> gru_cell(Var<T> gi, Var<T> gh, Var<T> h);

/// Sum over rows of -log softmax(logits + mask)[target]. mask entries are 0
/// (allowed) or -infinity (forbidden). Rows with target -1 are skipped.
/// Forbidden entries get exactly zero probability and zero gradient.
/// Throws std::invalid_argument when a target is masked or a row is fully masked.
template <typename T>
Var<T> masked_softmax_nll(Var<T> logits, const Tensor<T>& mask, std::span<const int> targets);

/// Row-wise masked softmax without taping. Returns probabilities with exact
/// zeros at masked entries.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& logits, const Tensor<T>& mask);

}  // namespace dpnc::ad
