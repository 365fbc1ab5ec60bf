#pragma once

// Q-network built on the tape: valid convolutions with ReLU, a flatten, ReLU
// dense layers and a linear head producing one value per action.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cg2a/gradkit.hpp"
#include "cg2a/tape.hpp"
#include "cg2a/tensor.hpp"

namespace cg2a {

struct ConvLayerSpec {
  std::size_t channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 2;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

struct QNetworkSpec {
  std::size_t in_channels = 9;
  std::size_t height = 48;
  std::size_t width = 48;
  std::vector<ConvLayerSpec> conv = {{16, 3, 2}, {32, 3, 2}};
  std::vector<std::size_t> dense = {128};
  std::size_t actions = 4;
  // When false every hidden activation is the identity.
  bool relu = true;

  /// Throws StructuralError for empty dimensions, fewer than two actions or
  /// a convolution stack that does not fit the input.
  void validate() const;

  /// e.g. "in=9x48x48;conv=16k3s2,32k3s2;dense=128;out=4;act=relu".
  std::string canonical() const;
  static QNetworkSpec parse(const std::string& text);
  /// FNV-1a of canonical().
  std::uint64_t hash() const;

  /// Flattened feature count after the last convolution.
  std::size_t conv_features() const;
  std::size_t param_count() const;
  Shape input_shape(std::size_t batch) const { return {batch, in_channels, height, width}; }

  friend bool operator==(const QNetworkSpec&, const QNetworkSpec&) = default;
};

/// Named parameter tensors in a fixed order: for each conv layer its weight
/// [O, C, k, k] then bias [O]; then each dense layer and the head as weight
/// [out, in] then bias [out]. flatten() walks that order, row-major inside each
/// tensor.
template <typename T>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  static ParamSet zeros(const QNetworkSpec& spec);
  /// Inverse of flatten(); throws StructuralError on a length mismatch.
  static ParamSet unflatten(const QNetworkSpec& spec, std::span<const double> flat);

  std::vector<double> flatten() const;
  std::size_t size() const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    out.names = names;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Uniform in ±1/sqrt(fan_in) for every weight and bias, drawn in double and
/// rounded to T, so the float and double sets from one seed agree.
template <typename T>
ParamSet<T> init_params(const QNetworkSpec& spec, std::uint64_t seed);

template <typename T>
struct QForward {
  Tape<T> tape;
  Var q_values;
  std::vector<Var> params;
};

/// obs_batch: [B, C, H, W]. Throws StructuralError on a shape mismatch.
template <typename T>
QForward<T> q_forward(const QNetworkSpec& spec, const ParamSet<T>& params, const Tensor<T>& obs_batch);

/// Mean over the batch of (q[b, actions[b]] - targets[b])², recorded on the
/// forward pass's tape.
template <typename T>
Var critic_loss(QForward<T>& pass, std::span<const std::size_t> actions, std::span<const T> targets);

/// Reverse accumulation from `loss`, flattened in ParamSet order.
template <typename T>
gradkit::FlatGradient backward(QForward<T>& pass, Var loss);

/// Q-values only; the tape is discarded.
template <typename T>
Tensor<T> q_values(const QNetworkSpec& spec, const ParamSet<T>& params, const Tensor<T>& obs_batch);

using LossFn = std::function<double(const ParamSet<double>&)>;

/// Central differences (L(θ + h e_j) - L(θ - h e_j)) / 2h over every coordinate.
gradkit::FlatGradient finite_diff_grad(const LossFn& loss, const ParamSet<double>& params,
                                       double h = 1e-4);

/// Same, restricted to the listed flat coordinates (output is aligned with
/// `coords`).
gradkit::FlatGradient finite_diff_grad(const LossFn& loss, const ParamSet<double>& params,
                                       std::span<const std::size_t> coords, double h = 1e-4);

}  // namespace cg2a
