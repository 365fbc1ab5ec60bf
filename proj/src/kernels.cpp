#include "cg2a/kernels.hpp"

#include <Eigen/Core>
#include <malloc.h>

#include <algorithm>
#include <cmath>

namespace cg2a::kernels {

namespace {

std::size_t row_length(Rows rows) { return rows.empty() ? 0 : rows.front().size(); }

// Packed upper-triangle index for a <= b.
inline std::size_t tri(std::size_t a, std::size_t b, std::size_t n) {
  return a * n - a * (a + 1) / 2 + b;
}

inline bool column_agrees(Rows rows, std::size_t j, bool symmetric) {
  int sign_sum = 0;
  for (const auto& row : rows) {
    const double v = row[j];
    sign_sum += (v > 0.0) - (v < 0.0);
  }
  const int n = static_cast<int>(rows.size());
  return symmetric ? (sign_sum == n || sign_sum == -n) : sign_sum == n;
}

// Eight interleaved partial sums combined in a fixed order, so the loop
// vectorizes without reassociation flags and stays deterministic.
inline double chunk_dot(const double* a, const double* b, std::size_t lo, std::size_t hi) {
  constexpr std::size_t kLanes = 8;
  double lane[kLanes] = {};
  std::size_t j = lo;
  for (; j + kLanes <= hi; j += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) lane[l] += a[j + l] * b[j + l];
  double acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; j < hi; ++j) acc += a[j] * b[j];
  return acc;
}

}  // namespace

std::vector<double> gram(Rows rows) {
  const std::size_t n = rows.size();
  const std::size_t len = row_length(rows);
  const std::size_t pairs = n * (n + 1) / 2;
  const std::size_t chunks = (len + kReduceChunk - 1) / kReduceChunk;
  std::vector<double> partial(chunks * pairs, 0.0);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kReduceChunk;
    const std::size_t hi = std::min(len, lo + kReduceChunk);
    double* out = partial.data() + static_cast<std::size_t>(c) * pairs;
    for (std::size_t a = 0; a < n; ++a) {
      const double* ra = rows[a].data();
      for (std::size_t b = a; b < n; ++b) {
        const double* rb = rows[b].data();
        out[tri(a, b, n)] = chunk_dot(ra, rb, lo, hi);
      }
    }
  }

  std::vector<double> g(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      double acc = 0.0;
      for (std::size_t c = 0; c < chunks; ++c) acc += partial[c * pairs + tri(a, b, n)];
      g[a * n + b] = acc;
      g[b * n + a] = acc;
    }
  }
  return g;
}

std::size_t agreement_mask(Rows rows, bool symmetric, std::span<std::uint8_t> out) {
  const std::size_t len = out.size();
  const std::size_t chunks = (len + kReduceChunk - 1) / kReduceChunk;
  const int n = static_cast<int>(rows.size());
  std::size_t conflicts = 0;
#pragma omp parallel for schedule(static) reduction(+ : conflicts)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kReduceChunk;
    const std::size_t hi = std::min(len, lo + kReduceChunk);
    int sign_sum[kReduceChunk] = {};
    for (const auto& row : rows) {
      const double* r = row.data() + lo;
      for (std::size_t j = 0; j < hi - lo; ++j) sign_sum[j] += (r[j] > 0.0) - (r[j] < 0.0);
    }
    std::size_t local = 0;
    for (std::size_t j = 0; j < hi - lo; ++j) {
      const bool agree = symmetric ? (sign_sum[j] == n || sign_sum[j] == -n) : sign_sum[j] == n;
      out[lo + j] = agree ? 1 : 0;
      local += agree ? 0 : 1;
    }
    conflicts += local;
  }
  return conflicts;
}

void damp_conflicts(std::span<const double> in, std::span<const std::uint8_t> mask, double gamma,
                    std::span<double> out) {
  const std::size_t len = in.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(len); ++j) {
    const auto u = static_cast<std::size_t>(j);
    out[u] = mask[u] ? in[u] : gamma * in[u];
  }
}

void weighted_sum(Rows rows, std::span<const double> weights, std::span<double> out) {
  const std::size_t len = out.size();
  const std::size_t chunks = (len + kReduceChunk - 1) / kReduceChunk;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kReduceChunk;
    const std::size_t hi = std::min(len, lo + kReduceChunk);
    double* dst = out.data();
    for (std::size_t j = lo; j < hi; ++j) dst[j] = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double w = weights[i];
      const double* r = rows[i].data();
      for (std::size_t j = lo; j < hi; ++j) dst[j] += w * r[j];
    }
  }
}

void damped_weighted_sum(Rows rows, std::span<const double> weights,
                         std::span<const std::uint8_t> mask, double gamma, std::span<double> out) {
  const std::size_t len = out.size();
  const std::size_t chunks = (len + kReduceChunk - 1) / kReduceChunk;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kReduceChunk;
    const std::size_t hi = std::min(len, lo + kReduceChunk);
    double* dst = out.data();
    const std::uint8_t* m = mask.data();
    for (std::size_t j = lo; j < hi; ++j) dst[j] = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double w = weights[i];
      const double* r = rows[i].data();
      for (std::size_t j = lo; j < hi; ++j) dst[j] += w * (m[j] ? r[j] : gamma * r[j]);
    }
  }
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void eigen_gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
                const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  const auto rows_a = static_cast<Eigen::Index>(trans_a ? k : m);
  const auto cols_a = static_cast<Eigen::Index>(trans_a ? m : k);
  const auto rows_b = static_cast<Eigen::Index>(trans_b ? n : k);
  const auto cols_b = static_cast<Eigen::Index>(trans_b ? k : n);
  ConstMap<T> A(a, rows_a, cols_a, Eigen::OuterStride<>(static_cast<Eigen::Index>(lda)));
  ConstMap<T> B(b, rows_b, cols_b, Eigen::OuterStride<>(static_cast<Eigen::Index>(ldb)));
  MutMap<T> C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n),
              Eigen::OuterStride<>(static_cast<Eigen::Index>(ldc)));
  if (beta == T(0)) C.setZero();
  else if (beta != T(1)) C *= beta;
  if (trans_a && trans_b) C.noalias() += alpha * A.transpose() * B.transpose();
  else if (trans_a) C.noalias() += alpha * A.transpose() * B;
  else if (trans_b) C.noalias() += alpha * A * B.transpose();
  else C.noalias() += alpha * A * B;
}

}  // namespace

void retain_freed_memory() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, -1);
}

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 float alpha, const float* a, std::size_t lda, const float* b, std::size_t ldb,
                 float beta, float* c, std::size_t ldc) {
  eigen_gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                  double alpha, const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double beta, double* c, std::size_t ldc) {
  eigen_gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
void im2col(const T* images, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, T* cols) {
  const std::size_t out_h = (height - kernel) / stride + 1;
  const std::size_t out_w = (width - kernel) / stride + 1;
  const std::size_t ncols = batch * out_h * out_w;
  const std::size_t nrows = channels * kernel * kernel;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(nrows); ++r) {
    const std::size_t row = static_cast<std::size_t>(r);
    const std::size_t kx = row % kernel;
    const std::size_t ky = (row / kernel) % kernel;
    const std::size_t ch = row / (kernel * kernel);
    T* dst = cols + row * ncols;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* img = images + (b * channels + ch) * height * width;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const T* src = img + (oy * stride + ky) * width + kx;
        for (std::size_t ox = 0; ox < out_w; ++ox) *dst++ = src[ox * stride];
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, T* images) {
  const std::size_t out_h = (height - kernel) / stride + 1;
  const std::size_t out_w = (width - kernel) / stride + 1;
  const std::size_t ncols = batch * out_h * out_w;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(batch); ++bi) {
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(channels); ++ci) {
      const auto b = static_cast<std::size_t>(bi);
      const auto ch = static_cast<std::size_t>(ci);
      T* img = images + (b * channels + ch) * height * width;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::size_t row = (ch * kernel + ky) * kernel + kx;
          const T* src = cols + row * ncols + b * out_h * out_w;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            T* dst = img + (oy * stride + ky) * width + kx;
            for (std::size_t ox = 0; ox < out_w; ++ox) dst[ox * stride] += *src++;
          }
        }
      }
    }
  }
}

template void im2col<float>(const float*, std::size_t, std::size_t, std::size_t, std::size_t,
                            std::size_t, std::size_t, float*);
template void im2col<double>(const double*, std::size_t, std::size_t, std::size_t, std::size_t,
                             std::size_t, std::size_t, double*);
template void col2im<float>(const float*, std::size_t, std::size_t, std::size_t, std::size_t,
                            std::size_t, std::size_t, float*);
template void col2im<double>(const double*, std::size_t, std::size_t, std::size_t, std::size_t,
                             std::size_t, std::size_t, double*);

namespace reference {

std::vector<double> gram(Rows rows) {
  const std::size_t n = rows.size();
  const std::size_t len = row_length(rows);
  std::vector<double> g(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double acc = 0.0;
      for (std::size_t j = 0; j < len; ++j) acc += rows[a][j] * rows[b][j];
      g[a * n + b] = acc;
    }
  }
  return g;
}

std::size_t agreement_mask(Rows rows, bool symmetric, std::span<std::uint8_t> out) {
  std::size_t conflicts = 0;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const bool agree = column_agrees(rows, j, symmetric);
    out[j] = agree ? 1 : 0;
    conflicts += agree ? 0 : 1;
  }
  return conflicts;
}

void damp_conflicts(std::span<const double> in, std::span<const std::uint8_t> mask, double gamma,
                    std::span<double> out) {
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = mask[j] ? in[j] : gamma * in[j];
}

void weighted_sum(Rows rows, std::span<const double> weights, std::span<double> out) {
  for (std::size_t j = 0; j < out.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) acc += weights[i] * rows[i][j];
    out[j] = acc;
  }
}

void damped_weighted_sum(Rows rows, std::span<const double> weights,
                         std::span<const std::uint8_t> mask, double gamma, std::span<double> out) {
  for (std::size_t j = 0; j < out.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) acc += weights[i] * (mask[j] ? rows[i][j] : gamma * rows[i][j]);
    out[j] = acc;
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const T bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += av * bv;
      }
      T& dst = c[i * ldc + j];
      dst = alpha * acc + (beta == T(0) ? T(0) : beta * dst);
    }
  }
}

template <typename T>
void im2col(const T* images, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, T* cols) {
  const std::size_t out_h = (height - kernel) / stride + 1;
  const std::size_t out_w = (width - kernel) / stride + 1;
  const std::size_t ncols = batch * out_h * out_w;
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t ky = 0; ky < kernel; ++ky)
      for (std::size_t kx = 0; kx < kernel; ++kx)
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const std::size_t row = (ch * kernel + ky) * kernel + kx;
              const std::size_t col = (b * out_h + oy) * out_w + ox;
              cols[row * ncols + col] =
                  images[((b * channels + ch) * height + oy * stride + ky) * width + ox * stride +
                         kx];
            }
}

template <typename T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, T* images) {
  const std::size_t out_h = (height - kernel) / stride + 1;
  const std::size_t out_w = (width - kernel) / stride + 1;
  const std::size_t ncols = batch * out_h * out_w;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < channels; ++ch)
      for (std::size_t ky = 0; ky < kernel; ++ky)
        for (std::size_t kx = 0; kx < kernel; ++kx)
          for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const std::size_t row = (ch * kernel + ky) * kernel + kx;
              const std::size_t col = (b * out_h + oy) * out_w + ox;
              images[((b * channels + ch) * height + oy * stride + ky) * width + ox * stride +
                     kx] += cols[row * ncols + col];
            }
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, float, const float*,
                          std::size_t, const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, double,
                           const double*, std::size_t, const double*, std::size_t, double, double*,
                           std::size_t);
template void im2col<float>(const float*, std::size_t, std::size_t, std::size_t, std::size_t,
                            std::size_t, std::size_t, float*);
template void im2col<double>(const double*, std::size_t, std::size_t, std::size_t, std::size_t,
                             std::size_t, std::size_t, double*);
template void col2im<float>(const float*, std::size_t, std::size_t, std::size_t, std::size_t,
                            std::size_t, std::size_t, float*);
template void col2im<double>(const double*, std::size_t, std::size_t, std::size_t, std::size_t,
                             std::size_t, std::size_t, double*);

}  // namespace reference

}  // namespace cg2a::kernels
