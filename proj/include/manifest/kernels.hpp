#pragma once

// Compute kernels behind the autograd ops. Every kernel exists twice:
// `reference` is a direct serial transcription used as the test oracle, and
// `parallel` is the OpenMP/im2col/packed-GEMM version used in training.
// Both write each output element from exactly one thread with a fixed
// accumulation order, so results do not depend on the thread count.

namespace manifest::kernels {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

#define MANIFEST_KERNEL_DECLS                                                                                         \
  /* C = op(A) * op(B) (+ C when accumulate). op(A) is m x k, op(B) is k x n. */                                      \
  void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda, const float* b, int ldb,        \
            float* c, int ldc, bool accumulate);                                                                      \
  void conv2d_forward(const ConvGeometry& g, const float* x, const float* w, const float* bias, float* y);            \
  /* Gradients accumulate into dx / dw / db; dx and db may be null. */                                                \
  void conv2d_backward(const ConvGeometry& g, const float* x, const float* w, const float* dy, float* dx, float* dw,  \
                       float* db);                                                                                    \
  /* Population mean and standard deviation of each contiguous group. */                                            \
  void group_moments(int groups, int group_size, const float* x, float* mean, float* stddev);                        \
  /* y = gamma[g] * (x - mean[g]) / (stddev[g] + eps) + beta[g] */                                                   \
  void group_normalize_affine(int groups, int group_size, const float* x, const float* mean, const float* stddev,   \
                              const float* gamma, const float* beta, float eps, float* y);                           \
  /* Accumulates into dx, dgamma, dbeta (dgamma / dbeta may be null). */                                              \
  void group_normalize_affine_backward(int groups, int group_size, const float* x, const float* mean,               \
                                       const float* stddev, const float* gamma, const float* dy, float eps,          \
                                       float* dx, float* dgamma, float* dbeta);

namespace reference {
MANIFEST_KERNEL_DECLS
}  // namespace reference

namespace parallel {
MANIFEST_KERNEL_DECLS
}  // namespace parallel

#undef MANIFEST_KERNEL_DECLS

enum class Backend { reference, parallel };

Backend backend();
void set_backend(Backend b);

// Switches the process-wide backend for the lifetime of the guard.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

// Dispatching entry points used by the autograd layer.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate);
void conv2d_forward(const ConvGeometry& g, const float* x, const float* w, const float* bias, float* y);
void conv2d_backward(const ConvGeometry& g, const float* x, const float* w, const float* dy, float* dx, float* dw,
                     float* db);
void group_moments(int groups, int group_size, const float* x, float* mean, float* stddev);
void group_normalize_affine(int groups, int group_size, const float* x, const float* mean, const float* stddev,
                            const float* gamma, const float* beta, float eps, float* y);
void group_normalize_affine_backward(int groups, int group_size, const float* x, const float* mean,
                                     const float* stddev, const float* gamma, const float* dy, float eps, float* dx,
                                     float* dgamma, float* dbeta);

int max_threads();

}  // namespace manifest::kernels
