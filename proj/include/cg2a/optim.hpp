#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "cg2a/gradkit.hpp"
#include "cg2a/qnet.hpp"

namespace cg2a {

enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// Moment estimates live in double regardless of the parameter type.
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// θ ← θ - lr·g for SGD, or one bias-corrected Adam step. The update is
/// computed in double and rounded to T. Throws StructuralError when the
/// gradient length differs from the flattened parameter count.
template <typename T>
void optimizer_update(ParamSet<T>& params, const gradkit::FlatGradient& grad,
                      const OptimizerConfig& config, OptimizerState& state);

}  // namespace cg2a
