#include "cg2a/optim.hpp"

#include <cmath>
#include <string>

#include "cg2a/errors.hpp"

namespace cg2a {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view text) {
  if (text == "sgd") return OptimizerKind::Sgd;
  if (text == "adam") return OptimizerKind::Adam;
  throw StructuralError("unknown optimizer '" + std::string(text) + "' (expected sgd or adam)");
}

template <typename T>
void optimizer_update(ParamSet<T>& params, const gradkit::FlatGradient& grad,
                      const OptimizerConfig& config, OptimizerState& state) {
  const std::size_t n = params.size();
  if (grad.size() != n) {
    throw StructuralError("optimizer_update: gradient has " + std::to_string(grad.size()) +
                          " entries for " + std::to_string(n) + " parameters");
  }
  ++state.step;
  const double lr = config.learning_rate;

  if (config.kind == OptimizerKind::Sgd) {
    std::size_t k = 0;
    for (auto& t : params.tensors)
      for (T& v : t.data()) {
        v = static_cast<T>(static_cast<double>(v) - lr * grad[k]);
        ++k;
      }
    return;
  }

  if (state.first_moment.size() != n) state.first_moment.assign(n, 0.0);
  if (state.second_moment.size() != n) state.second_moment.assign(n, 0.0);
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (auto& t : params.tensors)
    for (T& v : t.data()) {
      double& m = state.first_moment[k];
      double& s = state.second_moment[k];
      m = b1 * m + (1.0 - b1) * grad[k];
      s = b2 * s + (1.0 - b2) * grad[k] * grad[k];
      const double step = lr * (m / c1) / (std::sqrt(s / c2) + config.adam_epsilon);
      v = static_cast<T>(static_cast<double>(v) - step);
      ++k;
    }
}

template void optimizer_update<float>(ParamSet<float>&, const gradkit::FlatGradient&,
                                      const OptimizerConfig&, OptimizerState&);
template void optimizer_update<double>(ParamSet<double>&, const gradkit::FlatGradient&,
                                       const OptimizerConfig&, OptimizerState&);

}  // namespace cg2a
