#pragma once

// Data-parallel inner loops shared by gradkit, gradtape and augbox.
//
// Every kernel in `cg2a::kernels` has a serial counterpart in
// `cg2a::kernels::reference` with the same signature. The reference versions
// are plain loops kept for tests and benchmarks; production code calls the
// parallel ones.
//
// Reductions are deterministic: the index range is cut into fixed-size chunks
// (independent of the thread count), each chunk is reduced on its own, and
// chunk partials are summed in chunk order. Results therefore do not depend on
// OMP_NUM_THREADS, though they may differ from the reference in the last bits.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cg2a::kernels {

inline constexpr std::size_t kReduceChunk = 8192;

using Rows = std::span<const std::vector<double>>;

/// Gram matrix G[a*n+b] = rows[a]·rows[b] for n = rows.size(); all rows must
/// share one length.
std::vector<double> gram(Rows rows);

/// Per-component agreement across rows. out[j] = 1 when every rows[i][j] > 0,
/// or (symmetric) every rows[i][j] < 0. Zeros never agree. Returns the
/// number of components with out[j] == 0.
std::size_t agreement_mask(Rows rows, bool symmetric, std::span<std::uint8_t> out);

/// out[j] = mask[j] ? in[j] : gamma * in[j].
void damp_conflicts(std::span<const double> in, std::span<const std::uint8_t> mask, double gamma,
                    std::span<double> out);

/// out = Σ_i weights[i] * rows[i], accumulated in row order per component.
void weighted_sum(Rows rows, std::span<const double> weights, std::span<double> out);

/// Fused damp_conflicts + weighted_sum: out[j] = Σ_i weights[i] * d_i[j] with
/// d_i[j] = mask[j] ? rows[i][j] : gamma * rows[i][j], bit-identical to the
/// two-pass version.
void damped_weighted_sum(Rows rows, std::span<const double> weights,
                         std::span<const std::uint8_t> mask, double gamma, std::span<double> out);

/// Row-major C = alpha * op(A) * op(B) + beta * C, op = transpose when flagged.
/// C is m×n, op(A) is m×k, op(B) is k×n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

/// Unfolds a batch of C×H×W images into a (C·kh·kw) × (B·Ho·Wo) column matrix
/// for a valid (unpadded) convolution with the given stride.
template <typename T>
void im2col(const T* images, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, T* cols);

/// Adjoint of im2col: scatters-adds columns back into a zeroed image batch.
template <typename T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, T* images);

/// Keeps large freed blocks in the process heap (glibc) so the per-update
/// tensor allocations reuse warm pages instead of faulting in fresh ones.
void retain_freed_memory();

namespace reference {

std::vector<double> gram(Rows rows);
std::size_t agreement_mask(Rows rows, bool symmetric, std::span<std::uint8_t> out);
void damp_conflicts(std::span<const double> in, std::span<const std::uint8_t> mask, double gamma,
                    std::span<double> out);
void weighted_sum(Rows rows, std::span<const double> weights, std::span<double> out);
void damped_weighted_sum(Rows rows, std::span<const double> weights,
                         std::span<const std::uint8_t> mask, double gamma, std::span<double> out);

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

template <typename T>
void im2col(const T* images, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, T* cols);

template <typename T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, T* images);

}  // namespace reference

}  // namespace cg2a::kernels
