#include "mmh/optim.hpp"

#include <cmath>

#include "mmh/error.hpp"

namespace mmh {

void zero_grad(Parameters& params) {
  for (auto& [name, v] : params.tensors) v->grad.clear();
}

double compute_gradients(Parameters& params, const Batch& batch, bool train_mode, uint64_t dropout_seed) {
  zero_grad(params);
  ForwardOutput out = forward(params, batch, train_mode, dropout_seed);
  if (!out.loss) throw Error(ErrorCode::DegenerateBatch, "batch carries no labels");
  ag::backward(out.loss);
  return out.loss->value[0];
}

StepResult train_step(Parameters& params, const Batch& batch, AdamState& state, const AdamConfig& cfg,
                      uint64_t dropout_seed) {
  if (params.trainable_count() == 0) {
    throw Error(ErrorCode::NoTrainableParameters, "every parameter is frozen");
  }
  StepResult r;
  zero_grad(params);
  {
    ForwardOutput out = forward(params, batch, true, dropout_seed);
    if (!out.loss) throw Error(ErrorCode::DegenerateBatch, "batch carries no labels");
    r.loss = out.loss->value[0];
    r.n_tokens = out.n_tokens;
    if (!std::isfinite(r.loss)) throw Error(ErrorCode::NonFiniteLoss, "loss is " + std::to_string(r.loss));
    ag::backward(out.loss);
  }

  double sq = 0.0;
  for (auto& [name, v] : params.tensors) {
    if (!v->requires_grad) continue;
    for (double g : v->grad) sq += g * g;
  }
  r.grad_norm = std::sqrt(sq);
  if (!std::isfinite(r.grad_norm)) throw Error(ErrorCode::NonFiniteLoss, "gradient norm is not finite");
  const double clip = cfg.clip_norm > 0.0 && r.grad_norm > cfg.clip_norm ? cfg.clip_norm / r.grad_norm : 1.0;

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, v] : params.tensors) {
    if (!v->requires_grad) continue;
    auto& m = state.m[name];
    auto& s = state.v[name];
    if (m.size() != v->value.size()) m.assign(v->value.size(), 0.0);
    if (s.size() != v->value.size()) s.assign(v->value.size(), 0.0);
    if (v->grad.size() != v->value.size()) v->grad.assign(v->value.size(), 0.0);
    for (size_t i = 0; i < v->value.size(); ++i) {
      const double g = v->grad[i] * clip;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      s[i] = cfg.beta2 * s[i] + (1.0 - cfg.beta2) * g * g;
      v->value[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + cfg.eps);
    }
  }
  zero_grad(params);
  return r;
}

}  // namespace mmh
