#pragma once

// Reverse-mode autodiff over dense tensors.
//
// A Tape owns every value produced while recording. Operations are appended
// in execution order, so walking the node list backwards is a valid reverse
// topological order and visits each node once. Gradients accumulate, which
// lets a variable feed several consumers.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cg2a/tensor.hpp"

namespace cg2a {

struct Var {
  std::size_t id = 0;
};

template <typename T>
class Tape {
 public:
  /// A leaf that receives no gradient.
  Var constant(Tensor<T> value);
  /// A leaf whose gradient is accumulated by backward().
  Var parameter(Tensor<T> value);

  /// Valid (unpadded) 2-D convolution plus per-channel bias.
  /// x: [B, C, H, W], w: [O, C, k, k], b: [O] -> [B, O, Ho, Wo].
  Var conv2d(Var x, Var w, Var b, std::size_t stride);
  /// x: [B, in], w: [out, in], b: [out] -> x·wᵀ + b, [B, out].
  Var dense(Var x, Var w, Var b);
  Var relu(Var x);
  /// [B, ...] -> [B, product(...)].
  Var flatten(Var x);
  /// q: [B, A] -> [B] with out[b] = q[b, index[b]].
  Var select(Var q, std::span<const std::size_t> index);
  /// pred: [B] -> scalar mean((pred - target)²).
  Var mse(Var pred, std::span<const T> target);
  /// Elementwise product of equal shapes.
  Var mul(Var a, Var b);
  /// Sum of all entries -> scalar.
  Var sum(Var x);

  const Tensor<T>& value(Var v) const { return values_.at(v.id); }
  bool requires_grad(Var v) const { return needs_grad_.at(v.id); }

  /// Reverse accumulation from a scalar root. Throws StructuralError when the
  /// root holds more than one element.
  void backward(Var root);

  /// Gradient of the last backward() root w.r.t. v (zeros if v was unreached).
  const Tensor<T>& grad(Var v) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  /// Number of recorded values; Var ids run from 0 to value_count() - 1.
  std::size_t value_count() const noexcept { return values_.size(); }

 private:
  struct Node {
    std::size_t output;
    std::function<void(Tape&)> backward;
  };

  Var push(Tensor<T> value, bool needs_grad);
  Tensor<T>& grad_ref(Var v);
  bool any_needs_grad(std::initializer_list<Var> vars) const;

  std::vector<Tensor<T>> values_;
  std::vector<Tensor<T>> grads_;
  std::vector<bool> needs_grad_;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace cg2a
