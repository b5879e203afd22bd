// SPDX-License-Identifier: Apache-2.0
#include "lexkit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lexkit::nn {

Tensor softmax(const Tensor& x, int axis) {
  const auto& shape = x.shape();
  if (axis < 0) axis += static_cast<int>(shape.size());
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw std::invalid_argument("softmax: axis out of range");

  std::int64_t axis_len = shape[static_cast<std::size_t>(axis)];
  std::int64_t inner = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
  std::int64_t outer = x.size() / (axis_len * inner);

  Tensor out(shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      std::int64_t base = o * axis_len * inner + in;
      double mx = -HUGE_VAL;
      for (std::int64_t k = 0; k < axis_len; ++k) mx = std::max(mx, x[base + k * inner]);
      double sum = 0.0;
      for (std::int64_t k = 0; k < axis_len; ++k) {
        double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      for (std::int64_t k = 0; k < axis_len; ++k) out[base + k * inner] /= sum;
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto& shape = x.shape();
  std::int64_t m = shape.back();
  if (gain.size() != m || bias.size() != m)
    throw std::invalid_argument("layer_norm: gain/bias size mismatch");
  std::int64_t rows = x.size() / m;

  Tensor out(shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xi = x.data() + r * m;
    double* oi = out.data() + r * m;
    double mean = 0.0;
    for (std::int64_t j = 0; j < m; ++j) mean += xi[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::int64_t j = 0; j < m; ++j) {
      double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::int64_t j = 0; j < m; ++j) oi[j] = (xi[j] - mean) * inv * gain[j] + bias[j];
  }
  return out;
}

double cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [N x C]");
  std::int64_t n = logits.rows(), c = logits.cols();
  if (static_cast<std::int64_t>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy: label count mismatch");

  double total = 0.0;
  std::int64_t supervised = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    std::int64_t y = labels[static_cast<std::size_t>(r)];
    if (y == kIgnoreLabel) continue;
    if (y < 0 || y >= c) throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " out of range");
    const double* row = logits.data() + r * c;
    double mx = *std::max_element(row, row + c);
    double lse = 0.0;
    for (std::int64_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    total += -(row[y] - mx - std::log(lse));
    ++supervised;
  }
  if (supervised == 0) throw std::runtime_error("no supervised positions");
  return total / static_cast<double>(supervised);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / M_SQRT2)); }

double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x / M_SQRT2));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("matmul: rank-2 tensors required");
  std::int64_t m = trans_a ? a.cols() : a.rows();
  std::int64_t k = trans_a ? a.rows() : a.cols();
  std::int64_t kb = trans_b ? b.cols() : b.rows();
  std::int64_t n = trans_b ? b.rows() : b.cols();
  if (k != kb)
    throw std::invalid_argument("matmul: inner dims mismatch " + a.shape_str() + " x " + b.shape_str());

  Tensor out({m, n});
  // i-k-j loop order keeps the inner loop contiguous for the common
  // non-transposed case.
  for (std::int64_t i = 0; i < m; ++i) {
    double* oi = out.data() + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      double av = trans_a ? a.at(kk, i) : a.at(i, kk);
      if (av == 0.0) continue;
      if (!trans_b) {
        const double* brow = b.data() + kk * n;
        for (std::int64_t j = 0; j < n; ++j) oi[j] += av * brow[j];
      } else {
        for (std::int64_t j = 0; j < n; ++j) oi[j] += av * b.at(j, kk);
      }
    }
  }
  return out;
}

}  // namespace lexkit::nn
