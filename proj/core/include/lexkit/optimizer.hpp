// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lexkit/tensor.hpp"

namespace lexkit::nn {

/// A named trainable weight with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

  void zero_grad() { grad.fill(0.0); }
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::int64_t step = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. Increments state.step and applies the
/// update in place; state tensors are allocated on first use.
void adam_step(Parameter& param, AdamState& state, const AdamConfig& cfg);

/// Adam over a set of parameters, keyed by pointer identity so shared
/// weights get exactly one state (and one update per step call).
class Adam {
public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// Updates every distinct trainable parameter once; zeroes grads after.
  void step(const std::vector<Parameter*>& params);

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

private:
  AdamConfig cfg_;
  std::map<Parameter*, AdamState> states_;
};

}  // namespace lexkit::nn
