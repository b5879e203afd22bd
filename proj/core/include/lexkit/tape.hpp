// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "lexkit/optimizer.hpp"
#include "lexkit/rng.hpp"
#include "lexkit/tensor.hpp"

namespace lexkit::nn {

using Var = std::int32_t;

enum class Reduction { Mean, Sum };

/// Reverse-mode autodiff tape. Operations append nodes in topological
/// order; backward() walks them in reverse and accumulates gradients into
/// the Parameter objects bound via param(). One tape = one forward pass.
///
/// Parameter leaves are deduplicated by pointer, so a weight referenced
/// from several places (tied embeddings, cross-layer sharing) contributes
/// a single node and its gradients accumulate.
class Tape {
public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

  Var constant(Tensor value);
  Var param(Parameter& p);

  Var add(Var a, Var b);                 // same shape
  Var add_rowvec(Var a, Var b);          // a: [N x M], b: [M], broadcast over rows
  Var scale(Var a, double c);
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var gelu(Var x);
  Var tanh(Var x);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

  /// Identity when !training; otherwise inverted-dropout with keep
  /// probability 1-p, mask drawn from rng.
  Var dropout(Var x, double p, Rng& rng, bool training);

  /// out[i] = x[ids[i]], rows gathered from a [R x M] tensor.
  Var gather(Var x, std::vector<std::int64_t> ids);

  /// Fused multi-head self-attention core over one sequence.
  /// q,k,v: [T x E] with E divisible by heads; key_mask[j] == 0 means
  /// position j can never be attended to. Scores are scaled by
  /// 1/sqrt(E/heads).
  Var attention(Var q, Var k, Var v, const std::vector<int>& key_mask, std::int64_t heads);

  /// Scalar: cross-entropy of logits [N x C] against labels, positions with
  /// kIgnoreLabel excluded. Mean over supervised rows or plain sum.
  /// Throws "no supervised positions" when every row is ignored.
  Var cross_entropy(Var logits, const std::vector<std::int64_t>& labels,
                    Reduction reduction = Reduction::Mean);

  /// Scalar: -sum_i t_i log s_i with s = softmax(student_logits / T),
  /// reduced over rows and multiplied by T^2. Teacher rows must sum to 1
  /// within 1e-6.
  Var soft_cross_entropy(const Tensor& teacher_probs, Var student_logits, double temperature,
                         Reduction reduction = Reduction::Mean);

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
  const Tensor& grad(Var v) const;

  /// Seeds d(loss)=1 and propagates. Gradients of bound parameters are
  /// added into their .grad tensors (caller zeroes them between steps).
  void backward(Var loss);

  std::size_t num_nodes() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Tape&, Var)> backward;
    Parameter* bound = nullptr;
  };

  Var push(Tensor value, std::vector<Var> parents, std::function<void(Tape&, Var)> back);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v)]; }
  Tensor& grad_buf(Var v);

  std::vector<Node> nodes_;
  std::map<Parameter*, Var> param_vars_;
  bool check_finite_;
};

}  // namespace lexkit::nn
