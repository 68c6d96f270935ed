#include "mmh/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "mmh/error.hpp"
#include "mmh/kernels.hpp"

namespace mmh::ag {

namespace {

thread_local bool g_grad_enabled = true;

void check(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

// Output node wired to `parents` when any of them needs a gradient.
Var make(size_t rows, size_t cols, std::vector<Var> parents) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, 0.0);
  if (g_grad_enabled) {
    for (const auto& p : parents) n->requires_grad |= p->requires_grad;
    if (n->requires_grad) n->parents = std::move(parents);
  }
  return n;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Var leaf(size_t rows, size_t cols, std::vector<double> value, bool requires_grad) {
  check(value.size() == rows * cols, "leaf value size");
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var constant(size_t rows, size_t cols, std::vector<double> value) {
  return leaf(rows, cols, std::move(value), false);
}

Var matmul(const Var& a, const Var& b) {
  check(a->cols == b->rows, "matmul inner dimensions");
  const size_t n = a->rows, k = a->cols, m = b->cols;
  Var out = make(n, m, {a, b});
  kernels::matmul(a->value.data(), b->value.data(), out->value.data(), n, k, m, false);
  if (out->requires_grad) {
    out->backward_fn = [n, k, m](Node& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      if (A.requires_grad) kernels::matmul_nt(self.grad.data(), B.value.data(), A.g(), n, m, k, true);
      if (B.requires_grad) kernels::matmul_tn(A.value.data(), self.grad.data(), B.g(), k, n, m, true);
    };
  }
  return out;
}

Var matmul_nt(const Var& a, const Var& b) {
  check(a->cols == b->cols, "matmul_nt inner dimensions");
  const size_t n = a->rows, k = a->cols, m = b->rows;
  Var out = make(n, m, {a, b});
  kernels::matmul_nt(a->value.data(), b->value.data(), out->value.data(), n, k, m, false);
  if (out->requires_grad) {
    out->backward_fn = [n, k, m](Node& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      if (A.requires_grad) kernels::matmul(self.grad.data(), B.value.data(), A.g(), n, m, k, true);
      if (B.requires_grad) kernels::matmul_tn(self.grad.data(), A.value.data(), B.g(), m, n, k, true);
    };
  }
  return out;
}

Var add(const Var& a, const Var& b) {
  check(a->rows == b->rows && a->cols == b->cols, "add shapes");
  Var out = make(a->rows, a->cols, {a, b});
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] + b->value[i];
  if (out->requires_grad) {
    out->backward_fn = [](Node& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        double* g = p->g();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return out;
}

Var add_bias(const Var& x, const Var& bias) {
  check(bias->size() == x->cols, "bias width");
  const size_t rows = x->rows, cols = x->cols;
  Var out = make(rows, cols, {x, bias});
  for (size_t r = 0; r < rows; ++r) {
    for (size_t c = 0; c < cols; ++c) out->value[r * cols + c] = x->value[r * cols + c] + bias->value[c];
  }
  if (out->requires_grad) {
    out->backward_fn = [rows, cols](Node& self) {
      auto& X = *self.parents[0];
      auto& Bi = *self.parents[1];
      if (X.requires_grad) {
        double* g = X.g();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
      if (Bi.requires_grad) {
        double* g = Bi.g();
        for (size_t c = 0; c < cols; ++c) {
          double s = 0.0;
          for (size_t r = 0; r < rows; ++r) s += self.grad[r * cols + c];
          g[c] += s;
        }
      }
    };
  }
  return out;
}

Var scale(const Var& x, double s) {
  Var out = make(x->rows, x->cols, {x});
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = x->value[i] * s;
  if (out->requires_grad) {
    out->backward_fn = [s](Node& self) {
      double* g = self.parents[0]->g();
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
    };
  }
  return out;
}

Var gelu(const Var& x) {
  Var out = make(x->rows, x->cols, {x});
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (size_t i = 0; i < out->value.size(); ++i) {
    const double v = x->value[i];
    out->value[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  if (out->requires_grad) {
    out->backward_fn = [inv_sqrt2](Node& self) {
      auto& X = *self.parents[0];
      double* g = X.g();
      const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double v = X.value[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        g[i] += self.grad[i] * (cdf + v * pdf);
      }
    };
  }
  return out;
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check(gamma->size() == x->cols && beta->size() == x->cols, "layer_norm parameter width");
  const size_t rows = x->rows, cols = x->cols;
  Var out = make(rows, cols, {x, gamma, beta});
  auto xhat = std::make_shared<std::vector<double>>(rows * cols);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  kernels::layer_norm_forward(x->value.data(), gamma->value.data(), beta->value.data(), rows, cols, eps,
                              xhat->data(), rstd->data(), out->value.data());
  if (out->requires_grad) {
    out->backward_fn = [rows, cols, xhat, rstd](Node& self) {
      auto& X = *self.parents[0];
      auto& G = *self.parents[1];
      auto& Be = *self.parents[2];
      kernels::layer_norm_backward(self.grad.data(), xhat->data(), rstd->data(), G.value.data(), rows, cols,
                                   X.requires_grad ? X.g() : nullptr, G.requires_grad ? G.g() : nullptr,
                                   Be.requires_grad ? Be.g() : nullptr);
    };
  }
  return out;
}

Var embedding(const Var& table, const std::vector<int>& ids) {
  const size_t d = table->cols;
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= table->rows) throw Error(ErrorCode::ShapeMismatch, "token id out of range");
  }
  Var out = make(ids.size(), d, {table});
  for (size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(table->value.begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d, out->value.begin() + r * d);
  }
  if (out->requires_grad) {
    out->backward_fn = [ids, d](Node& self) {
      double* g = self.parents[0]->g();
      for (size_t r = 0; r < ids.size(); ++r) {
        for (size_t c = 0; c < d; ++c) g[ids[r] * d + c] += self.grad[r * d + c];
      }
    };
  }
  return out;
}

Var gather_rows(const std::vector<Var>& sources, const std::vector<RowRef>& refs, size_t cols) {
  for (const auto& s : sources) check(s->cols == cols, "gather_rows source width");
  for (const auto& r : refs) {
    check(r.source < static_cast<int>(sources.size()), "gather_rows source index");
    if (r.source >= 0) check(r.row < sources[r.source]->rows, "gather_rows row index");
  }
  Var out = make(refs.size(), cols, sources);
  for (size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].source < 0) continue;
    const auto& src = sources[refs[i].source]->value;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(refs[i].row * cols), cols, out->value.begin() + i * cols);
  }
  if (out->requires_grad) {
    out->backward_fn = [refs, cols](Node& self) {
      for (size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].source < 0) continue;
        auto& p = *self.parents[refs[i].source];
        if (!p.requires_grad) continue;
        double* g = p.g() + refs[i].row * cols;
        for (size_t c = 0; c < cols; ++c) g[c] += self.grad[i * cols + c];
      }
    };
  }
  return out;
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& shape) {
  const size_t d = q->cols;
  check(k->cols == d && v->cols == d, "attention widths");
  check(shape.heads > 0 && d % shape.heads == 0, "attention heads");
  check(q->rows == shape.batch * shape.q_len, "attention query rows");
  check(k->rows == shape.batch * shape.k_len && v->rows == k->rows, "attention key rows");
  check(shape.key_valid.size() == shape.batch * shape.k_len, "attention key mask");
  kernels::AttentionDims dims{shape.batch, shape.q_len, shape.k_len, shape.heads, d / shape.heads, shape.causal};
  Var out = make(q->rows, d, {q, k, v});
  auto probs = std::make_shared<std::vector<double>>(shape.batch * shape.heads * shape.q_len * shape.k_len);
  auto mask = std::make_shared<std::vector<uint8_t>>(shape.key_valid);
  kernels::attention_forward(q->value.data(), k->value.data(), v->value.data(), mask->data(), dims, probs->data(),
                             out->value.data());
  if (out->requires_grad) {
    out->backward_fn = [dims, probs, mask](Node& self) {
      auto& Q = *self.parents[0];
      auto& K = *self.parents[1];
      auto& V = *self.parents[2];
      // The kernel writes all three; unused ones go to scratch.
      double* dq = Q.requires_grad ? Q.g() : nullptr;
      std::vector<double> sq, sk, sv;
      if (!dq) { sq.assign(Q.value.size(), 0.0); dq = sq.data(); }
      double* dk = K.requires_grad ? K.g() : nullptr;
      if (!dk) { sk.assign(K.value.size(), 0.0); dk = sk.data(); }
      double* dv = V.requires_grad ? V.g() : nullptr;
      if (!dv) { sv.assign(V.value.size(), 0.0); dv = sv.data(); }
      kernels::attention_backward(Q.value.data(), K.value.data(), V.value.data(), mask->data(), dims, probs->data(),
                                  self.grad.data(), dq, dk, dv);
    };
  }
  return out;
}

Var dropout(const Var& x, double p, uint64_t seed) {
  if (p <= 0.0) return x;
  Var out = make(x->rows, x->cols, {x});
  auto keep = std::make_shared<std::vector<double>>(x->size());
  const double inv = 1.0 / (1.0 - p);
  for (size_t i = 0; i < x->size(); ++i) {
    const double u = static_cast<double>(splitmix64(seed ^ splitmix64(i)) >> 11) * 0x1.0p-53;
    (*keep)[i] = u >= p ? inv : 0.0;
    out->value[i] = x->value[i] * (*keep)[i];
  }
  if (out->requires_grad) {
    out->backward_fn = [keep](Node& self) {
      double* g = self.parents[0]->g();
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*keep)[i];
    };
  }
  return out;
}

Var cross_entropy(const Var& logits, const std::vector<int>& targets, int ignore) {
  check(targets.size() == logits->rows, "cross_entropy target count");
  const size_t rows = logits->rows, V = logits->cols;
  size_t count = 0;
  for (int t : targets) {
    if (t == ignore) continue;
    if (t < 0 || static_cast<size_t>(t) >= V) throw Error(ErrorCode::ShapeMismatch, "target id out of range");
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::DegenerateBatch, "every label position is ignored");
  Var out = make(1, 1, {logits});
  auto probs = std::make_shared<std::vector<double>>(rows * V, 0.0);
  double total = 0.0;
  for (size_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore) continue;
    const double* z = logits->value.data() + r * V;
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < V; ++c) mx = std::max(mx, z[c]);
    double sum = 0.0;
    for (size_t c = 0; c < V; ++c) sum += std::exp(z[c] - mx);
    const double lse = mx + std::log(sum);
    total += lse - z[targets[r]];
    for (size_t c = 0; c < V; ++c) (*probs)[r * V + c] = std::exp(z[c] - lse);
  }
  out->value[0] = total / static_cast<double>(count);
  if (out->requires_grad) {
    out->backward_fn = [probs, targets, ignore, rows, V, count](Node& self) {
      double* g = self.parents[0]->g();
      const double s = self.grad[0] / static_cast<double>(count);
      for (size_t r = 0; r < rows; ++r) {
        if (targets[r] == ignore) continue;
        for (size_t c = 0; c < V; ++c) g[r * V + c] += s * (*probs)[r * V + c];
        g[r * V + targets[r]] -= s;
      }
    };
  }
  return out;
}

void backward(const Var& root) {
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::fill(root->g(), root->g() + root->size(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->g();
      n->backward_fn(*n);
    }
  }
}

}  // namespace mmh::ag
