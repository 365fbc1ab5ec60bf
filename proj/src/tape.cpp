#include "cg2a/tape.hpp"

#include <algorithm>
#include <memory>
#include <string>

#include "cg2a/errors.hpp"
#include "cg2a/kernels.hpp"

namespace cg2a {

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool needs_grad) {
  values_.push_back(std::move(value));
  needs_grad_.push_back(needs_grad);
  grads_.emplace_back();
  return Var{values_.size() - 1};
}

template <typename T>
bool Tape<T>::any_needs_grad(std::initializer_list<Var> vars) const {
  return std::any_of(vars.begin(), vars.end(), [this](Var v) { return needs_grad_[v.id]; });
}

template <typename T>
Tensor<T>& Tape<T>::grad_ref(Var v) {
  return grads_[v.id];
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  if (!needs_grad_.at(v.id)) throw StructuralError("variable does not carry a gradient");
  return grads_.at(v.id);
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Tape<T>::parameter(Tensor<T> value) {
  return push(std::move(value), true);
}

template <typename T>
Var Tape<T>::conv2d(Var x, Var w, Var b, std::size_t stride) {
  const auto& xs = value(x).shape();
  const auto& ws = value(w).shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[2] != ws[3] || ws[1] != xs[1] ||
      value(b).shape() != Shape{ws[0]} || stride == 0 || xs[2] < ws[2] || xs[3] < ws[3]) {
    throw StructuralError("conv2d: incompatible shapes x" + shape_string(xs) + " w" +
                          shape_string(ws) + " b" + shape_string(value(b).shape()));
  }
  const std::size_t batch = xs[0], channels = xs[1], height = xs[2], width = xs[3];
  const std::size_t out_ch = ws[0], kernel = ws[2];
  const std::size_t out_h = (height - kernel) / stride + 1;
  const std::size_t out_w = (width - kernel) / stride + 1;
  const std::size_t patch = channels * kernel * kernel;
  const std::size_t spatial = out_h * out_w;
  const std::size_t ncols = batch * spatial;

  auto cols = std::make_shared<std::vector<T>>(patch * ncols);
  kernels::im2col(value(x).raw(), batch, channels, height, width, kernel, stride, cols->data());

  std::vector<T> tmp(out_ch * ncols);
  kernels::gemm<T>(false, false, out_ch, ncols, patch, T(1), value(w).raw(), patch, cols->data(),
                   ncols, T(0), tmp.data(), ncols);

  Tensor<T> out({batch, out_ch, out_h, out_w});
  const T* bias = value(b).raw();
  T* dst = out.raw();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_ch; ++o) {
      const T* src = tmp.data() + o * ncols + n * spatial;
      T* row = dst + (n * out_ch + o) * spatial;
      for (std::size_t p = 0; p < spatial; ++p) row[p] = src[p] + bias[o];
    }

  const Var y = push(std::move(out), any_needs_grad({x, w, b}));
  nodes_.push_back({y.id, [=](Tape& t) {
                      const T* dy = t.grads_[y.id].raw();
                      std::vector<T> dtmp(out_ch * ncols);
                      for (std::size_t n = 0; n < batch; ++n)
                        for (std::size_t o = 0; o < out_ch; ++o)
                          std::copy_n(dy + (n * out_ch + o) * spatial, spatial,
                                      dtmp.data() + o * ncols + n * spatial);
                      if (t.needs_grad_[w.id]) {
                        kernels::gemm<T>(false, true, out_ch, patch, ncols, T(1), dtmp.data(),
                                         ncols, cols->data(), ncols, T(1),
                                         t.grads_[w.id].raw(), patch);
                      }
                      if (t.needs_grad_[b.id]) {
                        T* db = t.grads_[b.id].raw();
                        for (std::size_t o = 0; o < out_ch; ++o) {
                          T acc = 0;
                          const T* row = dtmp.data() + o * ncols;
                          for (std::size_t c = 0; c < ncols; ++c) acc += row[c];
                          db[o] += acc;
                        }
                      }
                      if (t.needs_grad_[x.id]) {
                        std::vector<T> dcols(patch * ncols);
                        kernels::gemm<T>(true, false, patch, ncols, out_ch, T(1),
                                         t.values_[w.id].raw(), patch, dtmp.data(), ncols, T(0),
                                         dcols.data(), ncols);
                        kernels::col2im(dcols.data(), batch, channels, height, width, kernel,
                                        stride, t.grads_[x.id].raw());
                      }
                    }});
  return y;
}

template <typename T>
Var Tape<T>::dense(Var x, Var w, Var b) {
  const auto& xs = value(x).shape();
  const auto& ws = value(w).shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1] || value(b).shape() != Shape{ws[0]}) {
    throw StructuralError("dense: incompatible shapes x" + shape_string(xs) + " w" +
                          shape_string(ws) + " b" + shape_string(value(b).shape()));
  }
  const std::size_t batch = xs[0], in = xs[1], out_dim = ws[0];
  Tensor<T> out({batch, out_dim});
  const T* bias = value(b).raw();
  for (std::size_t n = 0; n < batch; ++n) std::copy_n(bias, out_dim, out.raw() + n * out_dim);
  kernels::gemm<T>(false, true, batch, out_dim, in, T(1), value(x).raw(), in, value(w).raw(), in,
                   T(1), out.raw(), out_dim);

  const Var y = push(std::move(out), any_needs_grad({x, w, b}));
  nodes_.push_back({y.id, [=](Tape& t) {
                      const T* dy = t.grads_[y.id].raw();
                      if (t.needs_grad_[w.id]) {
                        kernels::gemm<T>(true, false, out_dim, in, batch, T(1), dy, out_dim,
                                         t.values_[x.id].raw(), in, T(1), t.grads_[w.id].raw(),
                                         in);
                      }
                      if (t.needs_grad_[b.id]) {
                        T* db = t.grads_[b.id].raw();
                        for (std::size_t n = 0; n < batch; ++n)
                          for (std::size_t o = 0; o < out_dim; ++o) db[o] += dy[n * out_dim + o];
                      }
                      if (t.needs_grad_[x.id]) {
                        kernels::gemm<T>(false, false, batch, in, out_dim, T(1), dy, out_dim,
                                         t.values_[w.id].raw(), in, T(1), t.grads_[x.id].raw(),
                                         in);
                      }
                    }});
  return y;
}

template <typename T>
Var Tape<T>::relu(Var x) {
  Tensor<T> out = value(x);
  for (T& v : out.data()) v = v > T(0) ? v : T(0);
  const Var y = push(std::move(out), needs_grad_[x.id]);
  nodes_.push_back({y.id, [=](Tape& t) {
                      if (!t.needs_grad_[x.id]) return;
                      const T* in = t.values_[x.id].raw();
                      const T* dy = t.grads_[y.id].raw();
                      T* dx = t.grads_[x.id].raw();
                      const std::size_t n = t.values_[x.id].size();
                      for (std::size_t i = 0; i < n; ++i)
                        if (in[i] > T(0)) dx[i] += dy[i];
                    }});
  return y;
}

template <typename T>
Var Tape<T>::flatten(Var x) {
  const auto& xs = value(x).shape();
  if (xs.empty()) throw StructuralError("flatten: scalar input");
  const std::size_t batch = xs[0];
  const std::size_t features = value(x).size() / std::max<std::size_t>(batch, 1);
  const Var y = push(value(x).reshaped({batch, features}), needs_grad_[x.id]);
  nodes_.push_back({y.id, [=](Tape& t) {
                      if (!t.needs_grad_[x.id]) return;
                      auto dx = t.grads_[x.id].data();
                      auto dy = t.grads_[y.id].data();
                      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
                    }});
  return y;
}

template <typename T>
Var Tape<T>::select(Var q, std::span<const std::size_t> index) {
  const auto& qs = value(q).shape();
  if (qs.size() != 2 || index.size() != qs[0]) {
    throw StructuralError("select: expected " + std::to_string(qs.empty() ? 0 : qs[0]) +
                          " indices for q" + shape_string(qs));
  }
  const std::size_t batch = qs[0], width = qs[1];
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor<T> out({batch});
  for (std::size_t n = 0; n < batch; ++n) {
    if (idx[n] >= width) {
      throw StructuralError("select: action index " + std::to_string(idx[n]) +
                            " out of range for " + std::to_string(width) + " actions");
    }
    out[n] = value(q)[n * width + idx[n]];
  }
  const Var y = push(std::move(out), needs_grad_[q.id]);
  nodes_.push_back({y.id, [=](Tape& t) {
                      if (!t.needs_grad_[q.id]) return;
                      T* dq = t.grads_[q.id].raw();
                      const T* dy = t.grads_[y.id].raw();
                      for (std::size_t n = 0; n < batch; ++n) dq[n * width + idx[n]] += dy[n];
                    }});
  return y;
}

template <typename T>
Var Tape<T>::mse(Var pred, std::span<const T> target) {
  const auto& ps = value(pred).shape();
  if (ps.size() != 1 || ps[0] != target.size() || target.empty()) {
    throw StructuralError("mse: prediction" + shape_string(ps) + " vs " +
                          std::to_string(target.size()) + " targets");
  }
  const std::size_t n = target.size();
  std::vector<T> tgt(target.begin(), target.end());
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = value(pred)[i] - tgt[i];
    acc += d * d;
  }
  Tensor<T> out({1}, acc / static_cast<T>(n));
  const Var y = push(std::move(out), needs_grad_[pred.id]);
  nodes_.push_back({y.id, [=](Tape& t) {
                      if (!t.needs_grad_[pred.id]) return;
                      const T scale = T(2) * t.grads_[y.id][0] / static_cast<T>(n);
                      const T* p = t.values_[pred.id].raw();
                      T* dp = t.grads_[pred.id].raw();
                      for (std::size_t i = 0; i < n; ++i) dp[i] += scale * (p[i] - tgt[i]);
                    }});
  return y;
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  if (value(a).shape() != value(b).shape()) throw StructuralError("mul: shape mismatch");
  Tensor<T> out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= value(b)[i];
  const Var y = push(std::move(out), any_needs_grad({a, b}));
  nodes_.push_back({y.id, [=](Tape& t) {
                      const auto& dy = t.grads_[y.id];
                      const std::size_t n = dy.size();
                      if (t.needs_grad_[a.id]) {
                        for (std::size_t i = 0; i < n; ++i)
                          t.grads_[a.id][i] += dy[i] * t.values_[b.id][i];
                      }
                      if (t.needs_grad_[b.id]) {
                        for (std::size_t i = 0; i < n; ++i)
                          t.grads_[b.id][i] += dy[i] * t.values_[a.id][i];
                      }
                    }});
  return y;
}

template <typename T>
Var Tape<T>::sum(Var x) {
  T acc = 0;
  for (const T& v : value(x).data()) acc += v;
  const Var y = push(Tensor<T>({1}, acc), needs_grad_[x.id]);
  nodes_.push_back({y.id, [=](Tape& t) {
                      if (!t.needs_grad_[x.id]) return;
                      const T g = t.grads_[y.id][0];
                      for (T& v : t.grads_[x.id].data()) v += g;
                    }});
  return y;
}

template <typename T>
void Tape<T>::backward(Var root) {
  if (value(root).size() != 1) {
    throw StructuralError("backward: root must be a scalar, got " +
                          shape_string(value(root).shape()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (needs_grad_[i]) {
      grads_[i] = Tensor<T>(values_[i].shape());
    } else {
      grads_[i] = Tensor<T>();
    }
  }
  if (!needs_grad_[root.id]) return;
  grads_[root.id][0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output > root.id || !needs_grad_[it->output]) continue;
    it->backward(*this);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cg2a
