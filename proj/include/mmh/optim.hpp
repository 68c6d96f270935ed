#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmh/model.hpp"

namespace mmh {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

/// First and second moments keyed by parameter name, plus the step count.
struct AdamState {
  uint64_t t = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;

  bool operator==(const AdamState&) const = default;
};

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  size_t n_tokens = 0;
};

/// One forward/backward/update on the trainable tensors. Frozen tensors are
/// never written. Throws NoTrainableParameters, DegenerateBatch, or
/// NonFiniteLoss (parameters untouched in that case).
StepResult train_step(Parameters& params, const Batch& batch, AdamState& state, const AdamConfig& cfg,
                      uint64_t dropout_seed = 0);

/// Loss and gradients without an update; gradients are left on the parameter nodes.
double compute_gradients(Parameters& params, const Batch& batch, bool train_mode = false,
                         uint64_t dropout_seed = 0);

void zero_grad(Parameters& params);

}  // namespace mmh
