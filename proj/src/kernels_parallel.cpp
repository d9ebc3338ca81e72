#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "manifest/kernels.hpp"

namespace manifest::kernels::parallel {
namespace {

// Register tile: kMr rows of A against kNr columns of B. With 16-wide vectors
// the accumulator block fits in 12 zmm registers.
constexpr int kMr = 6;
constexpr int kNr = 32;
constexpr int kKc = 256;
constexpr int kNc = 2048;

using v16 = float __attribute__((vector_size(64)));

inline float a_at(bool t, const float* a, int lda, int i, int p) { return t ? a[p * lda + i] : a[i * lda + p]; }
inline float b_at(bool t, const float* b, int ldb, int p, int j) { return t ? b[j * ldb + p] : b[p * ldb + j]; }

// Packs op(A)[0:m, p0:p0+kc] into kMr-row panels, zero padded.
void pack_a(bool trans, const float* a, int lda, int m, int p0, int kc, float* out) {
  const int panels = (m + kMr - 1) / kMr;
#pragma omp parallel for schedule(static)
  for (int ip = 0; ip < panels; ++ip) {
    float* dst = out + static_cast<long>(ip) * kMr * kc;
    const int i0 = ip * kMr;
    for (int p = 0; p < kc; ++p) {
      for (int r = 0; r < kMr; ++r) {
        const int i = i0 + r;
        dst[p * kMr + r] = i < m ? a_at(trans, a, lda, i, p0 + p) : 0.0f;
      }
    }
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into kNr-column panels, zero padded.
void pack_b(bool trans, const float* b, int ldb, int p0, int kc, int j0, int nc, float* out) {
  const int panels = (nc + kNr - 1) / kNr;
#pragma omp parallel for schedule(static)
  for (int jp = 0; jp < panels; ++jp) {
    float* dst = out + static_cast<long>(jp) * kNr * kc;
    const int jb = j0 + jp * kNr;
    const int width = std::min(kNr, j0 + nc - jb);
    for (int p = 0; p < kc; ++p) {
      float* row = dst + p * kNr;
      if (!trans && width == kNr) {
        std::memcpy(row, b + static_cast<long>(p0 + p) * ldb + jb, sizeof(float) * kNr);
        continue;
      }
      for (int c = 0; c < kNr; ++c) row[c] = c < width ? b_at(trans, b, ldb, p0 + p, jb + c) : 0.0f;
    }
  }
}

void micro_kernel(int kc, const float* a, const float* b, float* c, int ldc, int rows, int cols, bool accumulate) {
  v16 acc[kMr][2];
  for (int r = 0; r < kMr; ++r) acc[r][0] = acc[r][1] = v16{};
  for (int p = 0; p < kc; ++p) {
    v16 b0, b1;
    std::memcpy(&b0, b + p * kNr, sizeof(v16));
    std::memcpy(&b1, b + p * kNr + 16, sizeof(v16));
    const float* ap = a + p * kMr;
    for (int r = 0; r < kMr; ++r) {
      const float av = ap[r];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  if (rows == kMr && cols == kNr) {
    for (int r = 0; r < kMr; ++r) {
      float* crow = c + static_cast<long>(r) * ldc;
      if (accumulate) {
        v16 c0, c1;
        std::memcpy(&c0, crow, sizeof(v16));
        std::memcpy(&c1, crow + 16, sizeof(v16));
        acc[r][0] += c0;
        acc[r][1] += c1;
      }
      std::memcpy(crow, &acc[r][0], sizeof(v16));
      std::memcpy(crow + 16, &acc[r][1], sizeof(v16));
    }
    return;
  }
  alignas(64) float tile[kMr][kNr];
  std::memcpy(tile, acc, sizeof(tile));
  for (int r = 0; r < rows; ++r) {
    float* crow = c + static_cast<long>(r) * ldc;
    for (int j = 0; j < cols; ++j) crow[j] = accumulate ? crow[j] + tile[r][j] : tile[r][j];
  }
}

void im2col(const ConvGeometry& g, const float* x, float* col) {
  const int ho = g.out_height(), wo = g.out_width();
  const int rows = g.in_channels * g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int kx = r % g.kernel;
    const int ky = (r / g.kernel) % g.kernel;
    const int c = r / (g.kernel * g.kernel);
    const float* plane = x + static_cast<long>(c) * g.height * g.width;
    float* dst = col + static_cast<long>(r) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      const int iy = oy * g.stride - g.pad + ky;
      float* drow = dst + oy * wo;
      if (iy < 0 || iy >= g.height) {
        std::fill(drow, drow + wo, 0.0f);
        continue;
      }
      const float* srow = plane + iy * g.width;
      for (int ox = 0; ox < wo; ++ox) {
        const int ix = ox * g.stride - g.pad + kx;
        drow[ox] = (ix >= 0 && ix < g.width) ? srow[ix] : 0.0f;
      }
    }
  }
}

// Scatter-add of a column buffer back to the image. Parallel over input
// channels so no two threads touch the same pixel.
void col2im_add(const ConvGeometry& g, const float* col, float* x) {
  const int ho = g.out_height(), wo = g.out_width();
  const int kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_channels; ++c) {
    float* plane = x + static_cast<long>(c) * g.height * g.width;
    for (int k = 0; k < kk; ++k) {
      const int ky = k / g.kernel, kx = k % g.kernel;
      const float* src = col + (static_cast<long>(c) * kk + k) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.height) continue;
        float* prow = plane + iy * g.width;
        const float* srow = src + oy * wo;
        for (int ox = 0; ox < wo; ++ox) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix >= 0 && ix < g.width) prow[ix] += srow[ox];
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill(c + static_cast<long>(i) * ldc, c + static_cast<long>(i) * ldc + n, 0.0f);
    }
    return;
  }
  const int m_panels = (m + kMr - 1) / kMr;
  std::vector<float> a_pack(static_cast<std::size_t>(m_panels) * kMr * std::min(k, kKc));
  std::vector<float> b_pack(static_cast<std::size_t>((std::min(n, kNc) + kNr - 1) / kNr) * kNr * std::min(k, kKc));
  for (int j0 = 0; j0 < n; j0 += kNc) {
    const int nc = std::min(kNc, n - j0);
    const int n_panels = (nc + kNr - 1) / kNr;
    for (int p0 = 0; p0 < k; p0 += kKc) {
      const int kc = std::min(kKc, k - p0);
      const bool acc = accumulate || p0 > 0;
      pack_a(trans_a, a, lda, m, p0, kc, a_pack.data());
      pack_b(trans_b, b, ldb, p0, kc, j0, nc, b_pack.data());
#pragma omp parallel for schedule(static)
      for (int jp = 0; jp < n_panels; ++jp) {
        const int jb = j0 + jp * kNr;
        const int cols = std::min(kNr, n - jb);
        const float* bp = b_pack.data() + static_cast<long>(jp) * kNr * kc;
        for (int ip = 0; ip < m_panels; ++ip) {
          const int ib = ip * kMr;
          const int rows = std::min(kMr, m - ib);
          micro_kernel(kc, a_pack.data() + static_cast<long>(ip) * kMr * kc, bp, c + static_cast<long>(ib) * ldc + jb,
                       ldc, rows, cols, acc);
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const float* x, const float* w, const float* bias, float* y) {
  const int ho = g.out_height(), wo = g.out_width();
  const int kdim = g.in_channels * g.kernel * g.kernel;
  const long pixels = static_cast<long>(ho) * wo;
  std::vector<float> col(is_pointwise(g) ? 0 : static_cast<std::size_t>(kdim) * pixels);
  for (int n = 0; n < g.batch; ++n) {
    const float* xn = x + static_cast<long>(n) * g.in_channels * g.height * g.width;
    float* yn = y + static_cast<long>(n) * g.out_channels * pixels;
    const float* src = xn;
    if (!is_pointwise(g)) {
      im2col(g, xn, col.data());
      src = col.data();
    }
    if (bias) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < g.out_channels; ++o) std::fill(yn + o * pixels, yn + (o + 1) * pixels, bias[o]);
    }
    gemm(false, false, g.out_channels, static_cast<int>(pixels), kdim, w, kdim, src, static_cast<int>(pixels), yn,
         static_cast<int>(pixels), bias != nullptr);
  }
}

void conv2d_backward(const ConvGeometry& g, const float* x, const float* w, const float* dy, float* dx, float* dw,
                     float* db) {
  const int ho = g.out_height(), wo = g.out_width();
  const int kdim = g.in_channels * g.kernel * g.kernel;
  const int pixels = ho * wo;
  const bool pointwise = is_pointwise(g);
  std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * pixels);
  std::vector<float> dcol(dx && !pointwise ? static_cast<std::size_t>(kdim) * pixels : 0);
  for (int n = 0; n < g.batch; ++n) {
    const float* xn = x + static_cast<long>(n) * g.in_channels * g.height * g.width;
    const float* dyn = dy + static_cast<long>(n) * g.out_channels * pixels;
    if (db) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < g.out_channels; ++o) {
        double s = 0.0;
        for (int i = 0; i < pixels; ++i) s += dyn[static_cast<long>(o) * pixels + i];
        db[o] += static_cast<float>(s);
      }
    }
    const float* src = xn;
    if (!pointwise) {
      im2col(g, xn, col.data());
      src = col.data();
    }
    gemm(false, true, g.out_channels, kdim, pixels, dyn, pixels, src, pixels, dw, kdim, true);
    if (dx) {
      float* dxn = dx + static_cast<long>(n) * g.in_channels * g.height * g.width;
      if (pointwise) {
        gemm(true, false, kdim, pixels, g.out_channels, w, kdim, dyn, pixels, dxn, pixels, true);
      } else {
        gemm(true, false, kdim, pixels, g.out_channels, w, kdim, dyn, pixels, dcol.data(), pixels, false);
        col2im_add(g, dcol.data(), dxn);
      }
    }
  }
}

void group_moments(int groups, int group_size, const float* x, float* mean, float* stddev) {
#pragma omp parallel for schedule(static)
  for (int gi = 0; gi < groups; ++gi) {
    const float* p = x + static_cast<long>(gi) * group_size;
    double sum = 0.0;
    for (int i = 0; i < group_size; ++i) sum += p[i];
    const double m = sum / group_size;
    double sq = 0.0;
    for (int i = 0; i < group_size; ++i) sq += (p[i] - m) * (p[i] - m);
    mean[gi] = static_cast<float>(m);
    stddev[gi] = static_cast<float>(std::sqrt(sq / group_size));
  }
}

void group_normalize_affine(int groups, int group_size, const float* x, const float* mean, const float* stddev,
                            const float* gamma, const float* beta, float eps, float* y) {
#pragma omp parallel for schedule(static)
  for (int gi = 0; gi < groups; ++gi) {
    const long off = static_cast<long>(gi) * group_size;
    const double inv = 1.0 / (static_cast<double>(stddev[gi]) + eps);
    const float scale = static_cast<float>(gamma[gi] * inv);
    const float shift = static_cast<float>(beta[gi] - gamma[gi] * mean[gi] * inv);
#pragma omp simd
    for (int i = 0; i < group_size; ++i) y[off + i] = scale * x[off + i] + shift;
  }
}

void group_normalize_affine_backward(int groups, int group_size, const float* x, const float* mean,
                                     const float* stddev, const float* gamma, const float* dy, float eps, float* dx,
                                     float* dgamma, float* dbeta) {
#pragma omp parallel for schedule(static)
  for (int gi = 0; gi < groups; ++gi) {
    const long off = static_cast<long>(gi) * group_size;
    const double s = stddev[gi];
    const double inv = 1.0 / (s + eps);
    double sum_dy = 0.0, sum_dy_xc = 0.0;
    for (int i = 0; i < group_size; ++i) {
      sum_dy += dy[off + i];
      sum_dy_xc += dy[off + i] * (x[off + i] - mean[gi]);
    }
    if (dgamma) dgamma[gi] += static_cast<float>(sum_dy_xc * inv);
    if (dbeta) dbeta[gi] += static_cast<float>(sum_dy);
    const double mean_dy = sum_dy / group_size;
    const double std_term = s > 0.0 ? gamma[gi] * sum_dy_xc * inv * inv / (group_size * s) : 0.0;
    const float a = static_cast<float>(gamma[gi] * inv);
    const float b = static_cast<float>(-gamma[gi] * inv * mean_dy + std_term * mean[gi]);
    const float c = static_cast<float>(-std_term);
#pragma omp simd
    for (int i = 0; i < group_size; ++i) dx[off + i] += a * dy[off + i] + c * x[off + i] + b;
  }
}

}  // namespace manifest::kernels::parallel
