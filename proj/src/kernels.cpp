#include <omp.h>

#include <atomic>

#include "manifest/kernels.hpp"

namespace manifest::kernels {
namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

int max_threads() { return omp_get_max_threads(); }

#define MANIFEST_DISPATCH(call) \
  do {                          \
    if (backend() == Backend::reference) { \
      reference::call;          \
    } else {                    \
      parallel::call;           \
    }                           \
  } while (0)

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate) {
  MANIFEST_DISPATCH(gemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc, accumulate));
}

void conv2d_forward(const ConvGeometry& g, const float* x, const float* w, const float* bias, float* y) {
  MANIFEST_DISPATCH(conv2d_forward(g, x, w, bias, y));
}

void conv2d_backward(const ConvGeometry& g, const float* x, const float* w, const float* dy, float* dx, float* dw,
                     float* db) {
  MANIFEST_DISPATCH(conv2d_backward(g, x, w, dy, dx, dw, db));
}

void group_moments(int groups, int group_size, const float* x, float* mean, float* stddev) {
  MANIFEST_DISPATCH(group_moments(groups, group_size, x, mean, stddev));
}

void group_normalize_affine(int groups, int group_size, const float* x, const float* mean, const float* stddev,
                            const float* gamma, const float* beta, float eps, float* y) {
  MANIFEST_DISPATCH(group_normalize_affine(groups, group_size, x, mean, stddev, gamma, beta, eps, y));
}

void group_normalize_affine_backward(int groups, int group_size, const float* x, const float* mean,
                                     const float* stddev, const float* gamma, const float* dy, float eps, float* dx,
                                     float* dgamma, float* dbeta) {
  MANIFEST_DISPATCH(group_normalize_affine_backward(groups, group_size, x, mean, stddev, gamma, dy, eps, dx, dgamma,
                                                    dbeta));
}

#undef MANIFEST_DISPATCH

}  // namespace manifest::kernels
