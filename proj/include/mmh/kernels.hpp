#pragma once

// Dense compute kernels behind the autograd engine.
//
// Each kernel exists twice: a straightforward serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`. Both visit every
// output element's reduction in the same order, so their results are
// bit-identical; the tests hold them to exact equality. Callers go through
// the dispatching functions at the bottom, which use the active backend.

#include <cstddef>
#include <cstdint>

namespace mmh::kernels {

/// Shape of a batched multi-head attention call. Q is [batch*q_len, heads*head_dim],
/// K and V are [batch*k_len, heads*head_dim]. key_valid has batch*k_len entries.
struct AttentionDims {
  size_t batch = 1;
  size_t q_len = 0;
  size_t k_len = 0;
  size_t heads = 1;
  size_t head_dim = 0;
  bool causal = false;
};

#define MMH_KERNEL_DECLS                                                                                  \
  /* C[n,m] (+)= A[n,k] B[k,m] */                                                                          \
  void matmul(const double* a, const double* b, double* c, size_t n, size_t k, size_t m, bool accumulate); \
  /* C[n,m] (+)= A[n,k] B[m,k]^T */                                                                        \
  void matmul_nt(const double* a, const double* b, double* c, size_t n, size_t k, size_t m,                \
                 bool accumulate);                                                                         \
  /* C[n,m] (+)= A[k,n]^T B[k,m] */                                                                        \
  void matmul_tn(const double* a, const double* b, double* c, size_t n, size_t k, size_t m,                \
                 bool accumulate);                                                                         \
  /* probs: [batch, heads, q_len, k_len]; masked entries are exactly 0 */                                  \
  void attention_forward(const double* q, const double* k, const double* v, const uint8_t* key_valid,      \
                         const AttentionDims& dims, double* probs, double* out);                           \
  /* accumulates into dq, dk, dv */                                                                        \
  void attention_backward(const double* q, const double* k, const double* v, const uint8_t* key_valid,     \
                          const AttentionDims& dims, const double* probs, const double* dout, double* dq,  \
                          double* dk, double* dv);                                                         \
  /* y = (x - mean) * rstd * gamma + beta per row; xhat and rstd are cached for backward */                \
  void layer_norm_forward(const double* x, const double* gamma, const double* beta, size_t rows,           \
                          size_t cols, double eps, double* xhat, double* rstd, double* y);                 \
  /* accumulates into dx, dgamma, dbeta (any may be null) */                                               \
  void layer_norm_backward(const double* dy, const double* xhat, const double* rstd, const double* gamma,   \
                           size_t rows, size_t cols, double* dx, double* dgamma, double* dbeta);

namespace serial {
MMH_KERNEL_DECLS
}  // namespace serial

namespace omp {
MMH_KERNEL_DECLS
}  // namespace omp

enum class Backend { Serial, OpenMP };

void set_backend(Backend b);
Backend backend();
/// Worker count used by the OpenMP backend.
int max_threads();

MMH_KERNEL_DECLS

#undef MMH_KERNEL_DECLS

}  // namespace mmh::kernels
