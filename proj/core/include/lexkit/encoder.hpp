// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lexkit/tape.hpp"

namespace lexkit {

struct Vocabulary;

struct EncoderConfig {
  std::int64_t vocab_size = 30000;  // V
  std::int64_t hidden = 768;        // E
  std::int64_t factorized = 0;      // S; 0 = direct VxE embedding
  std::int64_t layers = 12;         // L
  std::int64_t heads = 12;          // H
  std::int64_t ffn = 3072;          // F
  std::int64_t max_pos = 512;
  bool use_segments = true;
  bool use_pooler = true;
  bool share_weights = false;
  double dropout = 0.1;

  /// Throws on invariant violations (E % H, S < E, L >= 1, ...).
  void validate() const;
};

/// Named presets: bert-base, distil-half, albert-like, roberta-like.
/// Distilled configs drop segment embeddings and the pooler.
EncoderConfig encoder_preset(const std::string& name);

/// Flat JSON key-value file; a "preset" key seeds defaults, remaining keys
/// override field by field.
void save_encoder_config(const std::string& path, const EncoderConfig& config);
EncoderConfig load_encoder_config(const std::string& path);

/// One encoded sequence: [CLS] ... ([SEP] ...) [SEP] plus padding.
struct EncodedInput {
  std::vector<std::int64_t> ids;
  std::vector<int> segment_ids;    // 0/1
  std::vector<int> attention_mask; // 0 = PAD

  void validate(const EncoderConfig& config) const;
};

/// Closed-form trainable-parameter count (one physical layer when
/// share_weights; MLM decoder tied, so not counted).
std::int64_t param_count(const EncoderConfig& config);

/// Linear head over feature rows; owns its two parameters.
struct ClassifierHead {
  nn::Parameter w, b;

  ClassifierHead(const std::string& name, std::int64_t in_dim, std::int64_t num_classes,
                 Rng& rng);
  /// features [N x in] -> logits [N x classes].
  nn::Var logits(nn::Tape& tape, nn::Var features);
  std::vector<nn::Parameter*> parameters() { return {&w, &b}; }
};

/// Transformer encoder with post-layer-norm blocks, GELU feed-forward,
/// optional factorized embeddings and cross-layer physical weight sharing.
class EncoderModel {
 public:
  EncoderModel(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  /// Physical parameters, deduplicated, in creation order.
  std::vector<nn::Parameter*> parameters();
  nn::Parameter& at(const std::string& name);  // throws when absent

  /// Token + position (+ segment) embeddings, layer-normed and dropped out.
  nn::Var embed(nn::Tape& tape, const EncodedInput& input, Rng& rng, bool training);

  /// Full L-block forward; [T x E]. Masked positions neither attend nor
  /// are attended to.
  nn::Var encode_forward(nn::Tape& tape, const EncodedInput& input, Rng& rng, bool training);

  /// [T x E] -> [T x V]; output projection tied to the embedding table.
  nn::Var mlm_logits(nn::Tape& tape, nn::Var hidden);

  /// CLS-position feature vector [1 x E]: tanh pooler when configured,
  /// otherwise the raw CLS hidden state.
  nn::Var cls_vector(nn::Tape& tape, nn::Var hidden);

  /// Sequence-classification logits [1 x C] over the CLS feature.
  nn::Var cls_logits(nn::Tape& tape, nn::Var hidden, ClassifierHead& head);

  /// Per-position logits [T x C]; row t depends only on hidden row t.
  nn::Var token_logits(nn::Tape& tape, nn::Var hidden, ClassifierHead& head);

 private:
  nn::Parameter& make(const std::string& name, std::vector<std::int64_t> shape, Rng& rng,
                      double init_std);

  EncoderConfig config_;
  std::vector<std::unique_ptr<nn::Parameter>> owned_;
  std::map<std::string, nn::Parameter*> by_name_;
};

/// Copies base parameters into a hybrid-vocabulary model: embedding rows
/// (and MLM biases) for ids < V_base are copied; each appended word's row is
/// the mean over the subword rows of its base encoding. Configs must match
/// except vocab_size.
void hybrid_warm_start(EncoderModel& hybrid_model, EncoderModel& base_model,
                       const Vocabulary& base_vocab, const Vocabulary& hybrid_vocab);

}  // namespace lexkit
