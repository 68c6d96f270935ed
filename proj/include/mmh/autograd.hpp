#pragma once

// Minimal reverse-mode autodiff over row-major double matrices.
// Every op records its parents and a backward closure; backward() walks the
// graph in reverse topological order.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace mmh::ag {

struct Node {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  size_t size() const { return rows * cols; }
  double* g() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

using Var = std::shared_ptr<Node>;

/// While alive, new ops record no graph (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

Var leaf(size_t rows, size_t cols, std::vector<double> value, bool requires_grad);
Var constant(size_t rows, size_t cols, std::vector<double> value);

/// [n,k] x [k,m]
Var matmul(const Var& a, const Var& b);
/// [n,k] x [m,k]^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// Adds a length-cols bias to every row.
Var add_bias(const Var& x, const Var& bias);
Var scale(const Var& x, double s);
/// Exact erf-based GELU.
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Rows of `table` selected by `ids`.
Var embedding(const Var& table, const std::vector<int>& ids);

struct RowRef {
  int source = -1;  // -1 produces a zero row
  size_t row = 0;
};

/// Builds a matrix row by row from several sources of equal width.
Var gather_rows(const std::vector<Var>& sources, const std::vector<RowRef>& refs, size_t cols);

struct AttentionShape {
  size_t batch = 1;
  size_t q_len = 0;
  size_t k_len = 0;
  size_t heads = 1;
  bool causal = false;
  std::vector<uint8_t> key_valid;  // [batch * k_len]
};

/// Scaled dot-product multi-head attention. q: [batch*q_len, d], k/v: [batch*k_len, d].
Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& shape);

/// Inverted dropout with a per-element hash of (seed, index); identity when p == 0.
Var dropout(const Var& x, double p, uint64_t seed);

inline constexpr int kIgnore = -100;

/// Mean token cross-entropy over rows whose target is not kIgnore. 1x1 result.
/// Throws DegenerateBatch when every target is ignored.
Var cross_entropy(const Var& logits, const std::vector<int>& targets, int ignore = kIgnore);

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable node.
void backward(const Var& root);

}  // namespace mmh::ag
