// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lexkit/corpus.hpp"
#include "lexkit/encoder.hpp"
#include "lexkit/tokenizer.hpp"

namespace lexkit {

struct MaskingConfig {
  double p_select = 0.15;
  double p_mask = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;
};

/// One masked training sequence: labels carry the original id at supervised
/// positions and nn::kIgnoreLabel elsewhere.
struct MaskedSequence {
  EncodedInput input;
  std::vector<std::int64_t> labels;

  std::int64_t supervised_positions() const;
};

/// BERT-style dynamic masking. Each non-special position is independently
/// selected with p_select; selected positions become [MASK] / a uniform
/// random non-special id / stay unchanged with probability p_mask /
/// p_random / p_keep. Returns nullopt when the sequence has no maskable
/// position at all.
std::optional<MaskedSequence> mask_tokens(const EncodedInput& input, std::int64_t vocab_size,
                                          Rng& rng, const MaskingConfig& config = {});

/// Cross-entropy restricted to supervised positions (thin alias; labels use
/// nn::kIgnoreLabel at unsupervised positions).
double mlm_loss(const nn::Tensor& logits, const std::vector<std::int64_t>& labels);

/// Mean over rows of -sum_i t_i log s_i with s = softmax(logits / T),
/// multiplied by T^2. Throws when a teacher row does not sum to 1 within
/// 1e-6.
double distill_loss(const nn::Tensor& teacher_probs, const nn::Tensor& student_logits,
                    double temperature = 1.0);

/// alpha * ce + (1 - alpha) * mlm.
double combined_distill_objective(double mlm, double ce, double alpha = 0.5);

/// Sentence-order prediction: adjacent snippet pairs from one document,
/// label 1 in original order, 0 reversed (50/50 in expectation).
struct SopExample {
  Snippet seg_a, seg_b;
  int label = 1;
};

std::vector<SopExample> build_sop_examples(const std::vector<Snippet>& doc_snippets, Rng& rng,
                                           std::int64_t num_per_doc);

/// Training-loss log: raw per-step values plus per-epoch means; the moving
/// average is recomputed from the raw values on demand.
struct LossCurve {
  std::vector<double> raw;
  std::vector<double> epoch_means;
  std::int64_t window = 100;

  std::vector<double> moving_average() const;
};

/// CSV: step,raw_loss,moving_avg (header line included).
void save_loss_curve_csv(const std::string& path, const LossCurve& curve);
/// Per-epoch JSON summary; config_hash is embedded when non-empty.
void save_loss_curve_summary(const std::string& path, const LossCurve& curve,
                             const std::string& config_hash = "");

/// Consecutive snippets of one document concatenated up to maxlen (never
/// crossing documents), wrapped as [CLS] ... [SEP].
std::vector<EncodedInput> pack_sequences(const std::vector<Snippet>& corpus,
                                         const Vocabulary& vocab, std::int64_t maxlen);

struct PretrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  std::int64_t maxlen = 512;
  double lr = 3e-5;
  MaskingConfig masking;
  bool sop = false;  // auxiliary sentence-order objective (off: MLM only)
  double sop_weight = 1.0;
  std::uint64_t seed = 0;
};

/// MLM pre-training over packed snippet sequences. Mutates the model in
/// place and returns the loss curve; deterministic given the seed. Initial
/// weights are whatever the model holds (random init or a loaded
/// checkpoint).
LossCurve pretrain(EncoderModel& model, const Vocabulary& vocab,
                   const std::vector<Snippet>& corpus, const PretrainConfig& config);

struct DistillConfig {
  double alpha = 0.5;
  double temperature = 1.0;
  PretrainConfig train;
};

/// Copies teacher weights into a half-depth student: embeddings, heads, and
/// alternating transformer layers (0, 2, 4, ...).
void init_student_from_teacher(EncoderModel& student, EncoderModel& teacher);

/// Trains the student on alpha * soft-target loss + (1 - alpha) * MLM
/// against frozen teacher predictions over identical masked batches.
/// Requires student layers = teacher layers / 2, no segments, no pooler,
/// same vocabulary size.
LossCurve distill_train(EncoderModel& teacher, EncoderModel& student, const Vocabulary& vocab,
                        const std::vector<Snippet>& corpus, const DistillConfig& config);

/// Mean MLM loss over a held-out snippet set under deterministic masking.
double mlm_validation_loss(EncoderModel& model, const Vocabulary& vocab,
                           const std::vector<Snippet>& val_corpus, std::int64_t maxlen,
                           const MaskingConfig& masking, std::uint64_t seed);

}  // namespace lexkit
