#include <cmath>

#include "manifest/kernels.hpp"

namespace manifest::kernels::reference {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * ldc + j] : 0.0;
      for (int p = 0; p < k; ++p) {
        const float av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const float bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        acc += static_cast<double>(av) * bv;
      }
      c[i * ldc + j] = static_cast<float>(acc);
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const float* x, const float* w, const float* bias, float* y) {
  const int ho = g.out_height(), wo = g.out_width();
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_channels; ++o) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias ? bias[o] : 0.0;
          for (int c = 0; c < g.in_channels; ++c) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.height) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.width) continue;
                acc += static_cast<double>(x[((n * g.in_channels + c) * g.height + iy) * g.width + ix]) *
                       w[((o * g.in_channels + c) * g.kernel + ky) * g.kernel + kx];
              }
            }
          }
          y[((n * g.out_channels + o) * ho + oy) * wo + ox] = static_cast<float>(acc);
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, const float* x, const float* w, const float* dy, float* dx, float* dw,
                     float* db) {
  const int ho = g.out_height(), wo = g.out_width();
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_channels; ++o) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const float gout = dy[((n * g.out_channels + o) * ho + oy) * wo + ox];
          if (db) db[o] += gout;
          for (int c = 0; c < g.in_channels; ++c) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.height) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.width) continue;
                const int xi = ((n * g.in_channels + c) * g.height + iy) * g.width + ix;
                const int wi = ((o * g.in_channels + c) * g.kernel + ky) * g.kernel + kx;
                dw[wi] += gout * x[xi];
                if (dx) dx[xi] += gout * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

void group_moments(int groups, int group_size, const float* x, float* mean, float* stddev) {
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
  for (int gi = 0; gi < groups; ++gi) {
    const long off = static_cast<long>(gi) * group_size;
    const double inv = 1.0 / (static_cast<double>(stddev[gi]) + eps);
    for (int i = 0; i < group_size; ++i) {
      y[off + i] = static_cast<float>(gamma[gi] * (x[off + i] - mean[gi]) * inv + beta[gi]);
    }
  }
}

void group_normalize_affine_backward(int groups, int group_size, const float* x, const float* mean,
                                     const float* stddev, const float* gamma, const float* dy, float eps, float* dx,
                                     float* dgamma, float* dbeta) {
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
    // Derivative of the standard deviation vanishes on constant groups.
    const double std_term = s > 0.0 ? gamma[gi] * sum_dy_xc * inv * inv / (group_size * s) : 0.0;
    for (int i = 0; i < group_size; ++i) {
      const double xc = x[off + i] - mean[gi];
      dx[off + i] += static_cast<float>(gamma[gi] * inv * (dy[off + i] - mean_dy) - std_term * xc);
    }
  }
}

}  // namespace manifest::kernels::reference
