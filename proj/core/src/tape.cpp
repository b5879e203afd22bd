// SPDX-License-Identifier: Apache-2.0
#include "lexkit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lexkit/nn.hpp"

namespace lexkit::nn {

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var Tape::push(Tensor value, std::vector<Var> parents, std::function<void(Tape&, Var)> back) {
  if (check_finite_) value.check_finite("tape node " + std::to_string(nodes_.size()));
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.backward = std::move(back);
  for (Var p : n.parents)
    if (node(p).requires_grad) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(Var v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v)];
  if (!n.has_grad) throw std::runtime_error("no gradient recorded for node");
  return n.grad;
}

Var Tape::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_vars_.find(&p);
  if (it != param_vars_.end()) return it->second;
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.bound = &p;
  nodes_.push_back(std::move(n));
  Var v = static_cast<Var>(nodes_.size() - 1);
  param_vars_.emplace(&p, v);
  return v;
}

Var Tape::add(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = va;
  add_into(out, vb);
  return push(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Tensor& g = t.node(self).grad;
    if (t.node(a).requires_grad) add_into(t.grad_buf(a), g);
    if (t.node(b).requires_grad) add_into(t.grad_buf(b), g);
  });
}

Var Tape::add_rowvec(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rank() != 2 || vb.size() != va.cols())
    throw std::invalid_argument("add_rowvec: expected [N x M] and [M]");
  Tensor out = va;
  for (std::int64_t r = 0; r < va.rows(); ++r)
    for (std::int64_t c = 0; c < va.cols(); ++c) out.at(r, c) += vb[c];
  return push(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Tensor& g = t.node(self).grad;
    if (t.node(a).requires_grad) add_into(t.grad_buf(a), g);
    if (t.node(b).requires_grad) {
      Tensor& gb = t.grad_buf(b);
      for (std::int64_t r = 0; r < g.rows(); ++r)
        for (std::int64_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= c;
  return push(std::move(out), {a}, [a, c](Tape& t, Var self) {
    if (!t.node(a).requires_grad) return;
    const Tensor& g = t.node(self).grad;
    Tensor& ga = t.grad_buf(a);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  Tensor out = nn::matmul(value(a), value(b), trans_a, trans_b);
  return push(std::move(out), {a, b}, [a, b, trans_a, trans_b](Tape& t, Var self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    if (t.node(a).requires_grad) {
      Tensor da = trans_a ? nn::matmul(vb, g, trans_b, true) : nn::matmul(g, vb, false, !trans_b);
      add_into(t.grad_buf(a), da);
    }
    if (t.node(b).requires_grad) {
      Tensor db = trans_b ? nn::matmul(g, va, true, trans_a) : nn::matmul(va, g, !trans_a, false);
      add_into(t.grad_buf(b), db);
    }
  });
}

Var Tape::gelu(Var x) {
  const Tensor& vx = value(x);
  Tensor out(vx.shape());
  for (std::int64_t i = 0; i < vx.size(); ++i) out[i] = nn::gelu(vx[i]);
  return push(std::move(out), {x}, [x](Tape& t, Var self) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& vx = t.value(x);
    Tensor& gx = t.grad_buf(x);
    for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * nn::gelu_grad(vx[i]);
  });
}

Var Tape::tanh(Var x) {
  const Tensor& vx = value(x);
  Tensor out(vx.shape());
  for (std::int64_t i = 0; i < vx.size(); ++i) out[i] = std::tanh(vx[i]);
  return push(std::move(out), {x}, [x](Tape& t, Var self) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(self).grad;
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buf(x);
    for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& vx = value(x);
  const Tensor& vg = value(gain);
  const Tensor& vb = value(bias);
  std::int64_t m = vx.shape().back();
  if (vg.size() != m || vb.size() != m) throw std::invalid_argument("layer_norm: gain/bias size mismatch");
  std::int64_t rows = vx.size() / m;

  Tensor out(vx.shape());
  Tensor xhat(vx.shape());
  std::vector<double> inv(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xi = vx.data() + r * m;
    double mean = 0.0;
    for (std::int64_t j = 0; j < m; ++j) mean += xi[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::int64_t j = 0; j < m; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(m);
    double iv = 1.0 / std::sqrt(var + eps);
    inv[static_cast<std::size_t>(r)] = iv;
    for (std::int64_t j = 0; j < m; ++j) {
      double xh = (xi[j] - mean) * iv;
      xhat[r * m + j] = xh;
      out[r * m + j] = xh * vg[j] + vb[j];
    }
  }

  return push(std::move(out), {x, gain, bias},
              [x, gain, bias, xhat = std::move(xhat), inv = std::move(inv), m](Tape& t, Var self) {
                const Tensor& g = t.node(self).grad;
                const Tensor& vg = t.value(gain);
                std::int64_t rows = g.size() / m;
                if (t.node(gain).requires_grad) {
                  Tensor& gg = t.grad_buf(gain);
                  for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < m; ++j) gg[j] += g[r * m + j] * xhat[r * m + j];
                }
                if (t.node(bias).requires_grad) {
                  Tensor& gb = t.grad_buf(bias);
                  for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < m; ++j) gb[j] += g[r * m + j];
                }
                if (t.node(x).requires_grad) {
                  Tensor& gx = t.grad_buf(x);
                  double dm = static_cast<double>(m);
                  for (std::int64_t r = 0; r < rows; ++r) {
                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (std::int64_t j = 0; j < m; ++j) {
                      double dxh = g[r * m + j] * vg[j];
                      sum_dxh += dxh;
                      sum_dxh_xh += dxh * xhat[r * m + j];
                    }
                    double iv = inv[static_cast<std::size_t>(r)];
                    for (std::int64_t j = 0; j < m; ++j) {
                      double dxh = g[r * m + j] * vg[j];
                      gx[r * m + j] +=
                          iv * (dxh - sum_dxh / dm - xhat[r * m + j] * sum_dxh_xh / dm);
                    }
                  }
                }
              });
}

Var Tape::dropout(Var x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  const Tensor& vx = value(x);
  Tensor mask(vx.shape());
  double keep_scale = 1.0 / (1.0 - p);
  for (std::int64_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.bernoulli(1.0 - p) ? keep_scale : 0.0;
  Tensor out(vx.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = vx[i] * mask[i];
  return push(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, Var self) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(x);
    for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var Tape::gather(Var x, std::vector<std::int64_t> ids) {
  const Tensor& vx = value(x);
  if (vx.rank() != 2) throw std::invalid_argument("gather: expected [R x M]");
  std::int64_t m = vx.cols();
  for (auto id : ids)
    if (id < 0 || id >= vx.rows())
      throw std::out_of_range("gather: row " + std::to_string(id) + " out of range " + vx.shape_str());
  Tensor out({static_cast<std::int64_t>(ids.size()), m});
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::int64_t j = 0; j < m; ++j) out.at(static_cast<std::int64_t>(i), j) = vx.at(ids[i], j);
  return push(std::move(out), {x}, [x, ids = std::move(ids)](Tape& t, Var self) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad_buf(x);
    std::int64_t m = g.cols();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::int64_t j = 0; j < m; ++j) gx.at(ids[i], j) += g.at(static_cast<std::int64_t>(i), j);
  });
}

Var Tape::attention(Var q, Var k, Var v, const std::vector<int>& key_mask, std::int64_t heads) {
  const Tensor& vq = value(q);
  const Tensor& vk = value(k);
  const Tensor& vv = value(v);
  if (vq.rank() != 2 || !vq.same_shape(vk) || !vq.same_shape(vv))
    throw std::invalid_argument("attention: q/k/v must share [T x E]");
  std::int64_t tlen = vq.rows(), e = vq.cols();
  if (e % heads != 0) throw std::invalid_argument("attention: E not divisible by heads");
  if (static_cast<std::int64_t>(key_mask.size()) != tlen)
    throw std::invalid_argument("attention: mask length mismatch");
  bool any_key = false;
  for (int mv : key_mask) any_key = any_key || (mv != 0);
  if (!any_key) throw std::invalid_argument("attention: all keys masked");

  std::int64_t dh = e / heads;
  double scl = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[h, i, j]: attention weight of query i onto key j for head h.
  Tensor probs({heads, tlen, tlen});
  Tensor out({tlen, e});
  std::vector<double> scores(static_cast<std::size_t>(tlen));
  for (std::int64_t h = 0; h < heads; ++h) {
    std::int64_t off = h * dh;
    for (std::int64_t i = 0; i < tlen; ++i) {
      double mx = -HUGE_VAL;
      for (std::int64_t j = 0; j < tlen; ++j) {
        if (!key_mask[static_cast<std::size_t>(j)]) continue;
        double s = 0.0;
        for (std::int64_t d = 0; d < dh; ++d) s += vq.at(i, off + d) * vk.at(j, off + d);
        s *= scl;
        scores[static_cast<std::size_t>(j)] = s;
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (std::int64_t j = 0; j < tlen; ++j) {
        double p = key_mask[static_cast<std::size_t>(j)]
                       ? std::exp(scores[static_cast<std::size_t>(j)] - mx)
                       : 0.0;
        probs[(h * tlen + i) * tlen + j] = p;
        sum += p;
      }
      for (std::int64_t j = 0; j < tlen; ++j) probs[(h * tlen + i) * tlen + j] /= sum;
      for (std::int64_t d = 0; d < dh; ++d) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < tlen; ++j)
          acc += probs[(h * tlen + i) * tlen + j] * vv.at(j, off + d);
        out.at(i, off + d) = acc;
      }
    }
  }

  return push(std::move(out), {q, k, v},
              [q, k, v, probs = std::move(probs), heads, dh, scl](Tape& t, Var self) {
                const Tensor& g = t.node(self).grad;
                const Tensor& vq = t.value(q);
                const Tensor& vk = t.value(k);
                const Tensor& vv = t.value(v);
                std::int64_t tlen = g.rows();
                bool need_q = t.node(q).requires_grad;
                bool need_k = t.node(k).requires_grad;
                bool need_v = t.node(v).requires_grad;
                Tensor* gq = need_q ? &t.grad_buf(q) : nullptr;
                Tensor* gk = need_k ? &t.grad_buf(k) : nullptr;
                Tensor* gv = need_v ? &t.grad_buf(v) : nullptr;

                std::vector<double> dscore(static_cast<std::size_t>(tlen));
                for (std::int64_t h = 0; h < heads; ++h) {
                  std::int64_t off = h * dh;
                  for (std::int64_t i = 0; i < tlen; ++i) {
                    const double* a = probs.data() + (h * tlen + i) * tlen;
                    // dA_ij = g_i . v_j ; dV_j += a_ij * g_i
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < tlen; ++j) {
                      double da = 0.0;
                      for (std::int64_t d = 0; d < dh; ++d) da += g.at(i, off + d) * vv.at(j, off + d);
                      dscore[static_cast<std::size_t>(j)] = da;
                      dot += da * a[j];
                      if (need_v && a[j] != 0.0)
                        for (std::int64_t d = 0; d < dh; ++d) gv->at(j, off + d) += a[j] * g.at(i, off + d);
                    }
                    // softmax backward: dS_ij = a_ij (dA_ij - sum_j' a_ij' dA_ij')
                    for (std::int64_t j = 0; j < tlen; ++j) {
                      double ds = a[j] * (dscore[static_cast<std::size_t>(j)] - dot);
                      if (ds == 0.0) continue;
                      if (need_q)
                        for (std::int64_t d = 0; d < dh; ++d) gq->at(i, off + d) += scl * ds * vk.at(j, off + d);
                      if (need_k)
                        for (std::int64_t d = 0; d < dh; ++d) gk->at(j, off + d) += scl * ds * vq.at(i, off + d);
                    }
                  }
                }
              });
}

Var Tape::cross_entropy(Var logits, const std::vector<std::int64_t>& labels, Reduction reduction) {
  const Tensor& z = value(logits);
  if (z.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [N x C]");
  std::int64_t n = z.rows(), c = z.cols();
  if (static_cast<std::int64_t>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy: label count mismatch");

  Tensor probs({n, c});
  double total = 0.0;
  std::int64_t supervised = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    std::int64_t y = labels[static_cast<std::size_t>(r)];
    const double* row = z.data() + r * c;
    double mx = *std::max_element(row, row + c);
    double lse = 0.0;
    for (std::int64_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    for (std::int64_t j = 0; j < c; ++j) probs.at(r, j) = std::exp(row[j] - mx) / lse;
    if (y == kIgnoreLabel) continue;
    if (y < 0 || y >= c) throw std::invalid_argument("cross_entropy: label out of range");
    total += -(row[y] - mx - std::log(lse));
    ++supervised;
  }
  if (supervised == 0) throw std::runtime_error("no supervised positions");
  double denom = reduction == Reduction::Mean ? static_cast<double>(supervised) : 1.0;

  return push(Tensor::scalar(total / denom), {logits},
              [logits, labels, probs = std::move(probs), denom](Tape& t, Var self) {
                if (!t.node(logits).requires_grad) return;
                double coef = t.node(self).grad[0] / denom;
                Tensor& gz = t.grad_buf(logits);
                std::int64_t c = probs.cols();
                for (std::int64_t r = 0; r < probs.rows(); ++r) {
                  std::int64_t y = labels[static_cast<std::size_t>(r)];
                  if (y == kIgnoreLabel) continue;
                  for (std::int64_t j = 0; j < c; ++j)
                    gz.at(r, j) += coef * (probs.at(r, j) - (j == y ? 1.0 : 0.0));
                }
              });
}

Var Tape::soft_cross_entropy(const Tensor& teacher_probs, Var student_logits, double temperature,
                             Reduction reduction) {
  const Tensor& z = value(student_logits);
  if (z.rank() != 2 || !z.same_shape(teacher_probs))
    throw std::invalid_argument("soft_cross_entropy: shape mismatch");
  if (temperature <= 0.0) throw std::invalid_argument("soft_cross_entropy: temperature must be > 0");
  std::int64_t n = z.rows(), c = z.cols();
  for (std::int64_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) s += teacher_probs.at(r, j);
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument("soft_cross_entropy: teacher row " + std::to_string(r) +
                                  " sums to " + std::to_string(s));
  }

  Tensor sprobs({n, c});
  double total = 0.0;
  for (std::int64_t r = 0; r < n; ++r) {
    const double* row = z.data() + r * c;
    double mx = -HUGE_VAL;
    for (std::int64_t j = 0; j < c; ++j) mx = std::max(mx, row[j] / temperature);
    double lse = 0.0;
    for (std::int64_t j = 0; j < c; ++j) lse += std::exp(row[j] / temperature - mx);
    double log_lse = std::log(lse);
    for (std::int64_t j = 0; j < c; ++j) {
      double logp = row[j] / temperature - mx - log_lse;
      sprobs.at(r, j) = std::exp(logp);
      total += -teacher_probs.at(r, j) * logp;
    }
  }
  double denom = reduction == Reduction::Mean ? static_cast<double>(n) : 1.0;
  double tsq = temperature * temperature;

  return push(Tensor::scalar(tsq * total / denom), {student_logits},
              [student_logits, teacher = teacher_probs, sprobs = std::move(sprobs), temperature,
               denom, tsq](Tape& t, Var self) {
                if (!t.node(student_logits).requires_grad) return;
                double coef = t.node(self).grad[0] * tsq / (denom * temperature);
                Tensor& gz = t.grad_buf(student_logits);
                for (std::int64_t i = 0; i < sprobs.size(); ++i)
                  gz[i] += coef * (sprobs[i] - teacher[i]);
              });
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  grad_buf(loss)[0] = 1.0;
  for (Var v = loss; v >= 0; --v) {
    Node& n = node(v);
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, v);
  }
  for (auto& [p, v] : param_vars_) {
    Node& n = node(v);
    if (n.has_grad) add_into(p->grad, n.grad);
  }
}

}  // namespace lexkit::nn
