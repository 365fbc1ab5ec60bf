#pragma once

// Gradient agreement weighting and soft gradient surgery on flat gradients.
//
// A GradientSet holds one flattened gradient per loss term, index 0 being
// the loss on the unaugmented observation. The two halves of the method act
// on the raw set independently:
//
//   * gas_weights assigns w_i = s_i / Σ_k |s_k| with s_i = Σ_j g_i·g_j, so a
//     term is weighted by how well it aligns with the sum of all terms;
//   * conflict_mask marks components whose sign agrees across all terms and
//     sgs_apply scales every other component by a damping factor γ.
//
// cg2a_step composes them: weighted_combine(sgs_apply(G, mask, γ), w).
//
// Everything here is a pure function of its arguments plus an explicitly
// passed Rng; there is no shared state.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cg2a/rng.hpp"

namespace cg2a::gradkit {

using FlatGradient = std::vector<double>;

inline constexpr double kDefaultEpsilon = 1e-12;

/// One or more equal-length, finite, non-empty flat gradients.
///
/// A single-member set is accepted so that an Identity-only augmentation
/// combination degenerates to the plain gradient instead of failing.
class GradientSet {
 public:
  /// Throws StructuralError on an empty set, empty or mismatched lengths, and
  /// NumericInputError on any NaN/Inf entry.
  explicit GradientSet(std::vector<FlatGradient> grads);

  std::size_t count() const noexcept { return grads_.size(); }
  std::size_t dim() const noexcept { return grads_.front().size(); }

  const FlatGradient& operator[](std::size_t i) const { return grads_[i]; }
  std::span<const FlatGradient> grads() const noexcept { return grads_; }

  auto begin() const noexcept { return grads_.begin(); }
  auto end() const noexcept { return grads_.end(); }

  friend bool operator==(const GradientSet&, const GradientSet&) = default;

 private:
  std::vector<FlatGradient> grads_;
};

struct WeightVector {
  std::vector<double> w;
  bool fallback_used = false;

  /// Uniform 1/n weights flagged as a fallback.
  static WeightVector uniform(std::size_t n, bool fallback);

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

/// bits[j] == 1 where all gradients agree on the sign of component j.
struct ConflictMask {
  std::vector<std::uint8_t> bits;
  std::size_t conflicts = 0;

  std::size_t size() const noexcept { return bits.size(); }
  bool agrees(std::size_t j) const { return bits[j] != 0; }
  double conflict_fraction() const noexcept {
    return bits.empty() ? 0.0 : static_cast<double>(conflicts) / static_cast<double>(bits.size());
  }

  friend bool operator==(const ConflictMask&, const ConflictMask&) = default;
};

/// U(alpha, beta) with 0 <= alpha <= beta <= 1.
class DampingDistribution {
 public:
  DampingDistribution() = default;
  DampingDistribution(double alpha, double beta);

  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }

  friend bool operator==(const DampingDistribution&, const DampingDistribution&) = default;

 private:
  double alpha_ = 0.22;
  double beta_ = 0.28;
};

enum class AgreementMode {
  // Only all-positive components agree (the sign-sum equals the set size).
  StrictPaper,
  // All-positive or all-negative components agree.
  SignSymmetric,
};

std::string_view to_string(AgreementMode mode);
/// Accepts "strict" / "symmetric". Throws StructuralError otherwise.
AgreementMode parse_agreement_mode(std::string_view text);

struct StepDiagnostics {
  std::vector<double> per_grad_l2_norm;
  // Row-major count() x count() matrix.
  std::vector<double> pairwise_cosine;
  WeightVector weights;
  double conflict_fraction = 0.0;
  double gamma_sampled = 1.0;
  std::size_t negative_weights = 0;

  friend bool operator==(const StepDiagnostics&, const StepDiagnostics&) = default;
};

struct StepOutput {
  FlatGradient combined;
  StepDiagnostics diagnostics;
};

/// Pairwise dot products of the set, row-major count() x count().
std::vector<double> gram_matrix(const GradientSet& grads);

/// GAS weights from a precomputed Gram matrix of n gradients.
WeightVector gas_weights_from_gram(std::span<const double> gram, std::size_t n,
                                   double epsilon_denominator = kDefaultEpsilon);

/// Closed-form agreement weights. Falls back to uniform weights when
/// Σ_k |s_k| < epsilon_denominator. Negative weights are kept.
WeightVector gas_weights(const GradientSet& grads, double epsilon_denominator = kDefaultEpsilon);

/// Sign agreement per component; a zero component never agrees. A
/// single-member set agrees everywhere.
ConflictMask conflict_mask(const GradientSet& grads, AgreementMode mode);

/// One γ ~ U(alpha, beta) per update step.
double sample_damping(Rng& rng, const DampingDistribution& dist);

/// Keeps agreed components bit-for-bit and multiplies the rest by gamma.
GradientSet sgs_apply(const GradientSet& grads, const ConflictMask& mask, double gamma);

/// Σ_i w_i g_i in double precision.
FlatGradient weighted_combine(const GradientSet& grads, const WeightVector& weights);

/// weighted_combine(sgs_apply(grads, mask, gamma), weights) without
/// materializing the damped set; bit-identical to the composition.
FlatGradient sgs_combine(const GradientSet& grads, const ConflictMask& mask, double gamma,
                         const WeightVector& weights);

/// L2 norms and clamped cosine similarities from a Gram matrix. A zero
/// gradient has cosine 0 against everything, including itself.
void fill_geometry(std::span<const double> gram, std::size_t n, StepDiagnostics& out);

StepOutput cg2a_step(const GradientSet& grads, Rng& rng,
                     AgreementMode mode = AgreementMode::SignSymmetric,
                     const DampingDistribution& dist = {});

}  // namespace cg2a::gradkit
