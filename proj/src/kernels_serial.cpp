// Serial reference kernels. Kept deliberately plain: these define the
// summation order the OpenMP versions must reproduce.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mmh/kernels.hpp"

namespace mmh::kernels::serial {

void matmul(const double* a, const double* b, double* c, size_t n, size_t k, size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (size_t j = 0; j < m; ++j) c[i * m + j] += av * b[p * m + j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, size_t n, size_t k, size_t m, bool accumulate) {
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * m + j] = accumulate ? c[i * m + j] + s : s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, size_t n, size_t k, size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.0);
  for (size_t p = 0; p < k; ++p) {
    for (size_t i = 0; i < n; ++i) {
      const double av = a[p * n + i];
      for (size_t j = 0; j < m; ++j) c[i * m + j] += av * b[p * m + j];
    }
  }
}

namespace {

bool allowed(const uint8_t* key_valid, const AttentionDims& d, size_t b, size_t i, size_t j) {
  return key_valid[b * d.k_len + j] && (!d.causal || j <= i);
}

}  // namespace

void attention_forward(const double* q, const double* k, const double* v, const uint8_t* key_valid,
                       const AttentionDims& d, double* probs, double* out) {
  const size_t width = d.heads * d.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  for (size_t b = 0; b < d.batch; ++b) {
    for (size_t h = 0; h < d.heads; ++h) {
      for (size_t i = 0; i < d.q_len; ++i) {
        const double* qi = q + (b * d.q_len + i) * width + h * d.head_dim;
        double* p = probs + ((b * d.heads + h) * d.q_len + i) * d.k_len;
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < d.k_len; ++j) {
          p[j] = 0.0;
          if (!allowed(key_valid, d, b, i, j)) continue;
          const double* kj = k + (b * d.k_len + j) * width + h * d.head_dim;
          double s = 0.0;
          for (size_t t = 0; t < d.head_dim; ++t) s += qi[t] * kj[t];
          p[j] = s * scale;
          mx = std::max(mx, p[j]);
        }
        double sum = 0.0;
        for (size_t j = 0; j < d.k_len; ++j) {
          if (!allowed(key_valid, d, b, i, j)) continue;
          p[j] = std::exp(p[j] - mx);
          sum += p[j];
        }
        double* oi = out + (b * d.q_len + i) * width + h * d.head_dim;
        std::fill(oi, oi + d.head_dim, 0.0);
        if (sum == 0.0) continue;
        for (size_t j = 0; j < d.k_len; ++j) {
          if (!allowed(key_valid, d, b, i, j)) continue;
          p[j] /= sum;
          const double* vj = v + (b * d.k_len + j) * width + h * d.head_dim;
          for (size_t t = 0; t < d.head_dim; ++t) oi[t] += p[j] * vj[t];
        }
      }
    }
  }
}

void attention_backward(const double* q, const double* k, const double* v, const uint8_t* key_valid,
                        const AttentionDims& d, const double* probs, const double* dout, double* dq, double* dk,
                        double* dv) {
  const size_t width = d.heads * d.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  std::vector<double> dp(d.k_len);
  for (size_t b = 0; b < d.batch; ++b) {
    for (size_t h = 0; h < d.heads; ++h) {
      for (size_t i = 0; i < d.q_len; ++i) {
        const double* p = probs + ((b * d.heads + h) * d.q_len + i) * d.k_len;
        const double* qi = q + (b * d.q_len + i) * width + h * d.head_dim;
        const double* doi = dout + (b * d.q_len + i) * width + h * d.head_dim;
        double* dqi = dq + (b * d.q_len + i) * width + h * d.head_dim;
        double dot = 0.0;
        for (size_t j = 0; j < d.k_len; ++j) {
          dp[j] = 0.0;
          if (!allowed(key_valid, d, b, i, j)) continue;
          const double* vj = v + (b * d.k_len + j) * width + h * d.head_dim;
          double* dvj = dv + (b * d.k_len + j) * width + h * d.head_dim;
          for (size_t t = 0; t < d.head_dim; ++t) {
            dp[j] += doi[t] * vj[t];
            dvj[t] += p[j] * doi[t];
          }
          dot += p[j] * dp[j];
        }
        for (size_t j = 0; j < d.k_len; ++j) {
          if (!allowed(key_valid, d, b, i, j)) continue;
          const double ds = p[j] * (dp[j] - dot) * scale;
          const double* kj = k + (b * d.k_len + j) * width + h * d.head_dim;
          double* dkj = dk + (b * d.k_len + j) * width + h * d.head_dim;
          for (size_t t = 0; t < d.head_dim; ++t) {
            dqi[t] += ds * kj[t];
            dkj[t] += ds * qi[t];
          }
        }
      }
    }
  }
}

void layer_norm_forward(const double* x, const double* gamma, const double* beta, size_t rows, size_t cols,
                        double eps, double* xhat, double* rstd, double* y) {
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double mean = 0.0;
    for (size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (xr[c] - mean) * rstd[r];
      y[r * cols + c] = xhat[r * cols + c] * gamma[c] + beta[c];
    }
  }
}

void layer_norm_backward(const double* dy, const double* xhat, const double* rstd, const double* gamma,
                         size_t rows, size_t cols, double* dx, double* dgamma, double* dbeta) {
  if (dx) {
    for (size_t r = 0; r < rows; ++r) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (size_t c = 0; c < cols; ++c) {
        const double g = dy[r * cols + c] * gamma[c];
        mean_d += g;
        mean_dx += g * xhat[r * cols + c];
      }
      mean_d /= static_cast<double>(cols);
      mean_dx /= static_cast<double>(cols);
      for (size_t c = 0; c < cols; ++c) {
        const double g = dy[r * cols + c] * gamma[c];
        dx[r * cols + c] += rstd[r] * (g - mean_d - xhat[r * cols + c] * mean_dx);
      }
    }
  }
  for (size_t c = 0; c < cols; ++c) {
    double sg = 0.0, sb = 0.0;
    for (size_t r = 0; r < rows; ++r) {
      sg += dy[r * cols + c] * xhat[r * cols + c];
      sb += dy[r * cols + c];
    }
    if (dgamma) dgamma[c] += sg;
    if (dbeta) dbeta[c] += sb;
  }
}

}  // namespace mmh::kernels::serial
