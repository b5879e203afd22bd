// SPDX-License-Identifier: Apache-2.0
#include "lexkit/optimizer.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace lexkit::nn {

void adam_step(Parameter& param, AdamState& state, const AdamConfig& cfg) {
  if (!param.value.same_shape(param.grad))
    throw std::runtime_error("adam_step: grad shape mismatch for " + param.name);
  if (state.step == 0 && state.m.size() == 0) {
    state.m = Tensor::zeros(param.value.shape());
    state.v = Tensor::zeros(param.value.shape());
  }
  if (!state.m.same_shape(param.value))
    throw std::runtime_error("adam_step: state shape mismatch for " + param.name);

  state.step += 1;
  double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::int64_t n = param.value.size();
  for (std::int64_t i = 0; i < n; ++i) {
    double g = param.grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    double mhat = state.m[i] / b1t;
    double vhat = state.v[i] / b2t;
    param.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void Adam::step(const std::vector<Parameter*>& params) {
  std::set<Parameter*> seen;
  for (Parameter* p : params) {
    if (!p->trainable || !seen.insert(p).second) continue;
    adam_step(*p, states_[p], cfg_);
  }
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace lexkit::nn
