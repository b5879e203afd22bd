// SPDX-License-Identifier: Apache-2.0
#include "lexkit/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "lexkit/io.hpp"
#include "lexkit/nn.hpp"
#include "lexkit/tasks.hpp"

namespace lexkit {

using nn::Tape;
using nn::Tensor;
using nn::Var;

std::int64_t MaskedSequence::supervised_positions() const {
  std::int64_t n = 0;
  for (std::int64_t l : labels) n += l != nn::kIgnoreLabel;
  return n;
}

std::optional<MaskedSequence> mask_tokens(const EncodedInput& input, std::int64_t vocab_size,
                                          Rng& rng, const MaskingConfig& config) {
  if (std::abs(config.p_mask + config.p_random + config.p_keep - 1.0) > 1e-9)
    throw std::runtime_error("mask/random/keep probabilities must sum to 1");
  if (config.p_select < 0.0 || config.p_select > 1.0)
    throw std::runtime_error("p_select must be in [0,1]");
  bool any_maskable = false;
  for (std::int64_t id : input.ids) any_maskable |= id >= Vocabulary::kNumSpecials;
  if (!any_maskable) return std::nullopt;

  MaskedSequence out;
  out.input = input;
  out.labels.assign(input.ids.size(), nn::kIgnoreLabel);
  for (size_t i = 0; i < input.ids.size(); ++i) {
    if (input.ids[i] < Vocabulary::kNumSpecials) continue;  // specials never selected
    if (!rng.bernoulli(config.p_select)) continue;
    out.labels[i] = input.ids[i];
    const double action = rng.uniform_real();
    if (action < config.p_mask) {
      out.input.ids[i] = Vocabulary::kMask;
    } else if (action < config.p_mask + config.p_random) {
      out.input.ids[i] = Vocabulary::kNumSpecials +
                         static_cast<std::int64_t>(rng.uniform(
                             static_cast<std::uint64_t>(vocab_size - Vocabulary::kNumSpecials)));
    }  // else keep
  }
  return out;
}

double mlm_loss(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  return nn::cross_entropy(logits, labels);
}

double distill_loss(const Tensor& teacher_probs, const Tensor& student_logits,
                    double temperature) {
  if (temperature <= 0.0) throw std::runtime_error("temperature must be positive");
  if (teacher_probs.rank() != 2 || student_logits.rank() != 2 ||
      !teacher_probs.same_shape(student_logits))
    throw std::runtime_error("teacher/student shape mismatch");
  const std::int64_t n = teacher_probs.rows(), v = teacher_probs.cols();
  double total = 0.0;
  for (std::int64_t r = 0; r < n; ++r) {
    double tsum = 0.0;
    for (std::int64_t c = 0; c < v; ++c) tsum += teacher_probs.at(r, c);
    if (std::abs(tsum - 1.0) > 1e-6)
      throw std::runtime_error("teacher probability row " + std::to_string(r) +
                               " sums to " + std::to_string(tsum) + ", not 1");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < v; ++c) mx = std::max(mx, student_logits.at(r, c) / temperature);
    double lse = 0.0;
    for (std::int64_t c = 0; c < v; ++c)
      lse += std::exp(student_logits.at(r, c) / temperature - mx);
    lse = std::log(lse) + mx;
    for (std::int64_t c = 0; c < v; ++c)
      total -= teacher_probs.at(r, c) * (student_logits.at(r, c) / temperature - lse);
  }
  return temperature * temperature * total / static_cast<double>(n);
}

double combined_distill_objective(double mlm, double ce, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::runtime_error("alpha must be in [0,1]");
  return alpha * ce + (1.0 - alpha) * mlm;
}

std::vector<SopExample> build_sop_examples(const std::vector<Snippet>& doc_snippets, Rng& rng,
                                           std::int64_t num_per_doc) {
  std::vector<size_t> adjacent;  // i such that (i, i+1) share a document
  for (size_t i = 0; i + 1 < doc_snippets.size(); ++i)
    if (doc_snippets[i].doc_id == doc_snippets[i + 1].doc_id) adjacent.push_back(i);
  std::vector<SopExample> out;
  if (adjacent.empty()) return out;
  for (std::int64_t k = 0; k < num_per_doc; ++k) {
    const size_t i = adjacent[rng.uniform(adjacent.size())];
    SopExample ex;
    if (rng.bernoulli(0.5)) {
      ex.seg_a = doc_snippets[i];
      ex.seg_b = doc_snippets[i + 1];
      ex.label = 1;
    } else {
      ex.seg_a = doc_snippets[i + 1];
      ex.seg_b = doc_snippets[i];
      ex.label = 0;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<double> LossCurve::moving_average() const {
  std::vector<double> ma(raw.size());
  double acc = 0.0;
  for (size_t i = 0; i < raw.size(); ++i) {
    acc += raw[i];
    if (i >= static_cast<size_t>(window)) acc -= raw[i - static_cast<size_t>(window)];
    const size_t n = std::min(i + 1, static_cast<size_t>(window));
    ma[i] = acc / static_cast<double>(n);
  }
  return ma;
}

void save_loss_curve_csv(const std::string& path, const LossCurve& curve) {
  const auto ma = curve.moving_average();
  std::string out = "step,raw_loss,moving_avg\n";
  char buf[80];
  for (size_t i = 0; i < curve.raw.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, curve.raw[i], ma[i]);
    out += buf;
  }
  io::write_file(path, out);
}

void save_loss_curve_summary(const std::string& path, const LossCurve& curve,
                             const std::string& config_hash) {
  nlohmann::json j;
  j["steps"] = curve.raw.size();
  j["window"] = curve.window;
  j["epoch_means"] = curve.epoch_means;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  io::write_file(path, j.dump(2) + "\n");
}

std::vector<EncodedInput> pack_sequences(const std::vector<Snippet>& corpus,
                                         const Vocabulary& vocab, std::int64_t maxlen) {
  if (maxlen < 3) throw std::runtime_error("maxlen too small to pack sequences");
  const std::int64_t body = maxlen - 2;  // room for [CLS] and [SEP]
  std::vector<EncodedInput> out;
  std::vector<std::int64_t> cur;
  auto flush = [&] {
    if (cur.empty()) return;
    EncodedInput in;
    in.ids.push_back(Vocabulary::kCls);
    in.ids.insert(in.ids.end(), cur.begin(), cur.end());
    in.ids.push_back(Vocabulary::kSep);
    in.segment_ids.assign(in.ids.size(), 0);
    in.attention_mask.assign(in.ids.size(), 1);
    out.push_back(std::move(in));
    cur.clear();
  };
  std::string doc;
  for (const Snippet& sn : corpus) {
    if (sn.doc_id != doc) {  // never pack across documents
      flush();
      doc = sn.doc_id;
    }
    auto ids = encode(vocab, sn.text);
    if (static_cast<std::int64_t>(ids.size()) > body)
      ids.resize(static_cast<size_t>(body));  // lone over-long snippet
    if (static_cast<std::int64_t>(cur.size() + ids.size()) > body) flush();
    for (std::int32_t id : ids) cur.push_back(id);
  }
  flush();
  return out;
}

namespace {

// Per-sequence loss terms for one masked input; returns the scalar Var.
Var sequence_mlm_loss(EncoderModel& model, Tape& tape, const MaskedSequence& seq, Rng& rng,
                      bool training) {
  Var hidden = model.encode_forward(tape, seq.input, rng, training);
  Var logits = model.mlm_logits(tape, hidden);
  return tape.cross_entropy(logits, seq.labels, nn::Reduction::Mean);
}

Var mean_of(Tape& tape, const std::vector<Var>& terms) {
  Var total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
  return tape.scale(total, 1.0 / static_cast<double>(terms.size()));
}

// Groups snippet indices by document, preserving order.
std::vector<std::vector<Snippet>> group_by_doc(const std::vector<Snippet>& corpus) {
  std::vector<std::vector<Snippet>> docs;
  std::string cur;
  for (const Snippet& sn : corpus) {
    if (docs.empty() || sn.doc_id != cur) {
      docs.emplace_back();
      cur = sn.doc_id;
    }
    docs.back().push_back(sn);
  }
  return docs;
}

struct DistillTeacher {
  EncoderModel* model = nullptr;
  double alpha = 0.5;
  double temperature = 1.0;
};

LossCurve train_mlm_loop(EncoderModel& model, const Vocabulary& vocab,
                         const std::vector<Snippet>& corpus, const PretrainConfig& cfg,
                         const DistillTeacher* teacher) {
  if (vocab.size() != model.config().vocab_size)
    throw std::runtime_error("vocabulary size does not match model config");
  LossCurve curve;
  if (cfg.epochs == 0) return curve;
  if (cfg.batch_size <= 0) throw std::runtime_error("batch_size must be positive");
  const std::int64_t maxlen = std::min(cfg.maxlen, model.config().max_pos);
  const auto packed = pack_sequences(corpus, vocab, maxlen);
  if (packed.empty()) throw std::runtime_error("empty corpus");

  Rng rng(cfg.seed);
  nn::Adam opt({cfg.lr, 0.9, 0.999, 1e-8});
  auto params = model.parameters();

  // Optional sentence-order auxiliary head and data.
  std::unique_ptr<ClassifierHead> sop_head;
  if (cfg.sop) {
    sop_head = std::make_unique<ClassifierHead>("sop", model.config().hidden, 2, rng);
    for (nn::Parameter* p : sop_head->parameters()) params.push_back(p);
  }
  const auto docs = group_by_doc(corpus);

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(packed.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<SopExample> sop_pool;
    if (cfg.sop) {
      for (const auto& doc : docs) {
        auto ex = build_sop_examples(doc, rng, 1);
        sop_pool.insert(sop_pool.end(), ex.begin(), ex.end());
      }
    }
    size_t sop_next = 0;

    const size_t epoch_start = curve.raw.size();
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Tape tape;
      std::vector<Var> terms;
      for (size_t b = start; b < stop; ++b) {
        auto masked = mask_tokens(packed[order[b]], vocab.size(), rng, cfg.masking);
        if (!masked || masked->supervised_positions() == 0) continue;  // skip: nothing to learn
        if (teacher) {
          std::vector<std::int64_t> sup;
          for (size_t i = 0; i < masked->labels.size(); ++i)
            if (masked->labels[i] != nn::kIgnoreLabel) sup.push_back(static_cast<std::int64_t>(i));
          // Frozen teacher predictions at the same masked positions.
          Tape ttape;
          Rng scratch(0);
          Var th = teacher->model->encode_forward(ttape, masked->input, scratch, false);
          Var tl = teacher->model->mlm_logits(ttape, th);
          const Tensor& tlog = ttape.value(tl);
          Tensor scaled({static_cast<std::int64_t>(sup.size()), tlog.cols()});
          for (size_t r = 0; r < sup.size(); ++r)
            for (std::int64_t c = 0; c < tlog.cols(); ++c)
              scaled.at(static_cast<std::int64_t>(r), c) =
                  tlog.at(sup[r], c) / teacher->temperature;
          const Tensor tprobs = nn::softmax(scaled, 1);

          Var hidden = model.encode_forward(tape, masked->input, rng, true);
          Var logits = model.mlm_logits(tape, hidden);
          Var hard = tape.cross_entropy(logits, masked->labels, nn::Reduction::Mean);
          Var soft = tape.soft_cross_entropy(tprobs, tape.gather(logits, sup),
                                             teacher->temperature, nn::Reduction::Mean);
          terms.push_back(tape.add(tape.scale(soft, teacher->alpha),
                                   tape.scale(hard, 1.0 - teacher->alpha)));
        } else {
          terms.push_back(sequence_mlm_loss(model, tape, *masked, rng, true));
        }
      }
      if (terms.empty()) continue;
      Var loss = mean_of(tape, terms);

      if (cfg.sop && sop_next < sop_pool.size()) {
        std::vector<Var> sop_terms;
        const size_t sop_stop = std::min(sop_pool.size(), sop_next + (stop - start));
        for (; sop_next < sop_stop; ++sop_next) {
          const SopExample& ex = sop_pool[sop_next];
          const EncodedInput in =
              encode_pair(vocab, ex.seg_a.text, ex.seg_b.text, maxlen);
          Var hidden = model.encode_forward(tape, in, rng, true);
          Var logits = model.cls_logits(tape, hidden, *sop_head);
          sop_terms.push_back(tape.cross_entropy(logits, {ex.label}, nn::Reduction::Mean));
        }
        if (!sop_terms.empty())
          loss = tape.add(loss, tape.scale(mean_of(tape, sop_terms), cfg.sop_weight));
      }

      tape.backward(loss);
      opt.step(params);
      curve.raw.push_back(tape.value(loss).item());
    }
    const size_t n = curve.raw.size() - epoch_start;
    double mean = 0.0;
    for (size_t i = epoch_start; i < curve.raw.size(); ++i) mean += curve.raw[i];
    curve.epoch_means.push_back(n == 0 ? 0.0 : mean / static_cast<double>(n));
  }
  return curve;
}

}  // namespace

LossCurve pretrain(EncoderModel& model, const Vocabulary& vocab,
                   const std::vector<Snippet>& corpus, const PretrainConfig& config) {
  return train_mlm_loop(model, vocab, corpus, config, nullptr);
}

void init_student_from_teacher(EncoderModel& student, EncoderModel& teacher) {
  const EncoderConfig& sc = student.config();
  const EncoderConfig& tc = teacher.config();
  if (sc.vocab_size != tc.vocab_size || sc.hidden != tc.hidden || sc.ffn != tc.ffn ||
      sc.factorized != tc.factorized)
    throw std::runtime_error("student/teacher dimensions incompatible for initialization");
  for (nn::Parameter* sp : student.parameters()) {
    std::string src = sp->name;
    if (src.rfind("layer.", 0) == 0) {
      // Student layer i takes teacher layer 2i.
      const size_t dot = src.find('.', 6);
      const std::int64_t idx = std::stoll(src.substr(6, dot - 6));
      src = "layer." + std::to_string(2 * idx) + src.substr(dot);
    }
    nn::Parameter& tp = teacher.at(src);
    if (tp.value.shape() != sp->value.shape())
      throw std::runtime_error("shape mismatch initializing " + sp->name);
    sp->value = tp.value;
    sp->grad = Tensor::zeros(sp->value.shape());
  }
}

LossCurve distill_train(EncoderModel& teacher, EncoderModel& student, const Vocabulary& vocab,
                        const std::vector<Snippet>& corpus, const DistillConfig& config) {
  if (student.config().vocab_size != teacher.config().vocab_size ||
      vocab.size() != teacher.config().vocab_size)
    throw std::runtime_error("teacher/student vocabulary mismatch");
  if (student.config().layers * 2 != teacher.config().layers)
    throw std::runtime_error("student must have exactly half the teacher's layers");
  if (student.config().use_segments || student.config().use_pooler)
    throw std::runtime_error("distilled student drops segment embeddings and the pooler");
  DistillTeacher dt{&teacher, config.alpha, config.temperature};
  return train_mlm_loop(student, vocab, corpus, config.train, &dt);
}

double mlm_validation_loss(EncoderModel& model, const Vocabulary& vocab,
                           const std::vector<Snippet>& val_corpus, std::int64_t maxlen,
                           const MaskingConfig& masking, std::uint64_t seed) {
  const auto packed =
      pack_sequences(val_corpus, vocab, std::min(maxlen, model.config().max_pos));
  if (packed.empty()) throw std::runtime_error("empty corpus");
  Rng rng(seed);
  double total = 0.0;
  std::int64_t positions = 0;
  for (const EncodedInput& in : packed) {
    auto masked = mask_tokens(in, vocab.size(), rng, masking);
    if (!masked || masked->supervised_positions() == 0) continue;
    Tape tape;
    Rng scratch(0);
    Var hidden = model.encode_forward(tape, masked->input, scratch, false);
    Var logits = model.mlm_logits(tape, hidden);
    const double loss = nn::cross_entropy(tape.value(logits), masked->labels);
    total += loss * static_cast<double>(masked->supervised_positions());
    positions += masked->supervised_positions();
  }
  if (positions == 0) throw std::runtime_error("no supervised positions");
  return total / static_cast<double>(positions);
}

}  // namespace lexkit
