// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "lexkit/tensor.hpp"

namespace lexkit::nn {

/// Label value marking positions excluded from a loss.
inline constexpr std::int64_t kIgnoreLabel = -1;

/// Numerically stable softmax along `axis`. Works on any rank; `axis`
/// indexes into shape(). Max-subtraction keeps exp() in range.
Tensor softmax(const Tensor& x, int axis);

/// Per-row (last axis) normalization to zero mean / unit variance followed
/// by the elementwise affine gain*x + bias. `eps` is added to the variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Mean of -log softmax(logits)[label] over rows whose label != kIgnoreLabel.
/// logits is [N x C]. Throws if every row is ignored ("no supervised
/// positions") or a label is out of range.
double cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels);

double gelu(double x);
double gelu_grad(double x);

/// C = op(A) * op(B) for 2D tensors, with optional transposes.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

}  // namespace lexkit::nn
