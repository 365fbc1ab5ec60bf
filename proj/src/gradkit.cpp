#include "cg2a/gradkit.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <string>

#include "cg2a/errors.hpp"
#include "cg2a/kernels.hpp"

namespace cg2a::gradkit {

namespace {

// Exponent bits all set means Inf or NaN; the OR-reduction vectorizes.
bool has_non_finite(const FlatGradient& g) {
  std::uint64_t bad = 0;
  for (double v : g) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    bad |= static_cast<std::uint64_t>((bits & 0x7ff0000000000000ULL) == 0x7ff0000000000000ULL);
  }
  return bad != 0;
}

}  // namespace

GradientSet::GradientSet(std::vector<FlatGradient> grads) : grads_(std::move(grads)) {
  if (grads_.empty()) throw StructuralError("gradient set is empty");
  const std::size_t m = grads_.front().size();
  if (m == 0) throw StructuralError("gradient set has zero-length gradients");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (grads_[i].size() != m) {
      throw StructuralError("gradient " + std::to_string(i) + " has length " +
                            std::to_string(grads_[i].size()) + ", expected " + std::to_string(m));
    }
    if (has_non_finite(grads_[i])) {
      throw NumericInputError("gradient " + std::to_string(i) + " has a non-finite entry");
    }
  }
}

WeightVector WeightVector::uniform(std::size_t n, bool fallback) {
  return {std::vector<double>(n, 1.0 / static_cast<double>(n)), fallback};
}

DampingDistribution::DampingDistribution(double alpha, double beta) : alpha_(alpha), beta_(beta) {
  if (!(0.0 <= alpha && alpha <= beta && beta <= 1.0)) {
    throw StructuralError("damping interval must satisfy 0 <= alpha <= beta <= 1, got (" +
                          std::to_string(alpha) + ", " + std::to_string(beta) + ")");
  }
}

std::string_view to_string(AgreementMode mode) {
  return mode == AgreementMode::StrictPaper ? "strict" : "symmetric";
}

AgreementMode parse_agreement_mode(std::string_view text) {
  if (text == "strict") return AgreementMode::StrictPaper;
  if (text == "symmetric") return AgreementMode::SignSymmetric;
  throw StructuralError("unknown agreement mode '" + std::string(text) +
                        "' (expected strict or symmetric)");
}

std::vector<double> gram_matrix(const GradientSet& grads) { return kernels::gram(grads.grads()); }

WeightVector gas_weights_from_gram(std::span<const double> gram, std::size_t n,
                                   double epsilon_denominator) {
  if (!(epsilon_denominator > 0.0)) throw StructuralError("epsilon_denominator must be positive");
  if (gram.size() != n * n) throw StructuralError("gram matrix size does not match set size");

  std::vector<double> s(n, 0.0);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) s[i] += gram[i * n + j];
    denom += std::abs(s[i]);
  }
  if (!std::isfinite(denom)) throw NumericInputError("agreement scores overflowed");
  if (denom < epsilon_denominator) return WeightVector::uniform(n, true);

  for (double& v : s) v /= denom;
  return {std::move(s), false};
}

WeightVector gas_weights(const GradientSet& grads, double epsilon_denominator) {
  return gas_weights_from_gram(gram_matrix(grads), grads.count(), epsilon_denominator);
}

ConflictMask conflict_mask(const GradientSet& grads, AgreementMode mode) {
  ConflictMask mask;
  // A lone gradient has nothing to disagree with.
  if (grads.count() == 1) {
    mask.bits.assign(grads.dim(), 1);
    return mask;
  }
  mask.bits.resize(grads.dim());
  mask.conflicts = kernels::agreement_mask(grads.grads(), mode == AgreementMode::SignSymmetric,
                                           mask.bits);
  return mask;
}

double sample_damping(Rng& rng, const DampingDistribution& dist) {
  return rng.uniform(dist.alpha(), dist.beta());
}

GradientSet sgs_apply(const GradientSet& grads, const ConflictMask& mask, double gamma) {
  if (mask.size() != grads.dim()) {
    throw StructuralError("mask length " + std::to_string(mask.size()) +
                          " does not match gradient length " + std::to_string(grads.dim()));
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw StructuralError("gamma must lie in [0, 1]");
  std::vector<FlatGradient> out(grads.count(), FlatGradient(grads.dim()));
  for (std::size_t i = 0; i < grads.count(); ++i) {
    kernels::damp_conflicts(grads[i], mask.bits, gamma, out[i]);
  }
  return GradientSet(std::move(out));
}

FlatGradient weighted_combine(const GradientSet& grads, const WeightVector& weights) {
  if (weights.w.size() != grads.count()) {
    throw StructuralError("weight count " + std::to_string(weights.w.size()) +
                          " does not match gradient count " + std::to_string(grads.count()));
  }
  FlatGradient out(grads.dim());
  kernels::weighted_sum(grads.grads(), weights.w, out);
  return out;
}

FlatGradient sgs_combine(const GradientSet& grads, const ConflictMask& mask, double gamma,
                         const WeightVector& weights) {
  if (mask.size() != grads.dim()) {
    throw StructuralError("mask length " + std::to_string(mask.size()) +
                          " does not match gradient length " + std::to_string(grads.dim()));
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw StructuralError("gamma must lie in [0, 1]");
  if (weights.w.size() != grads.count()) {
    throw StructuralError("weight count " + std::to_string(weights.w.size()) +
                          " does not match gradient count " + std::to_string(grads.count()));
  }
  FlatGradient out(grads.dim());
  kernels::damped_weighted_sum(grads.grads(), weights.w, mask.bits, gamma, out);
  return out;
}

void fill_geometry(std::span<const double> gram, std::size_t n, StepDiagnostics& out) {
  out.per_grad_l2_norm.assign(n, 0.0);
  out.pairwise_cosine.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.per_grad_l2_norm[i] = std::sqrt(gram[i * n + i]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double denom = out.per_grad_l2_norm[i] * out.per_grad_l2_norm[j];
      double c = 0.0;
      if (denom > 0.0) c = i == j ? 1.0 : std::clamp(gram[i * n + j] / denom, -1.0, 1.0);
      out.pairwise_cosine[i * n + j] = c;
      out.pairwise_cosine[j * n + i] = c;
    }
  }
}

StepOutput cg2a_step(const GradientSet& grads, Rng& rng, AgreementMode mode,
                     const DampingDistribution& dist) {
  const std::size_t n = grads.count();
  const auto gram = gram_matrix(grads);

  StepOutput result;
  auto& diag = result.diagnostics;
  fill_geometry(gram, n, diag);
  diag.weights = gas_weights_from_gram(gram, n);
  diag.negative_weights = static_cast<std::size_t>(
      std::count_if(diag.weights.w.begin(), diag.weights.w.end(), [](double w) { return w < 0; }));

  const auto mask = conflict_mask(grads, mode);
  diag.conflict_fraction = mask.conflict_fraction();
  diag.gamma_sampled = sample_damping(rng, dist);

  result.combined = sgs_combine(grads, mask, diag.gamma_sampled, diag.weights);
  return result;
}

}  // namespace cg2a::gradkit
