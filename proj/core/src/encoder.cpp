// SPDX-License-Identifier: Apache-2.0
#include "lexkit/encoder.hpp"

#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "lexkit/io.hpp"
#include "lexkit/tokenizer.hpp"

namespace lexkit {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void EncoderConfig::validate() const {
  if (vocab_size <= 5) throw std::runtime_error("vocab_size must exceed the special tokens");
  if (hidden <= 0 || heads <= 0 || ffn <= 0) throw std::runtime_error("non-positive dimension");
  if (layers < 1) throw std::runtime_error("layers must be >= 1");
  if (hidden % heads != 0) throw std::runtime_error("hidden size not divisible by heads");
  if (factorized < 0 || factorized >= hidden)
    throw std::runtime_error("factorized size must be 0 or in (0, hidden)");
  if (max_pos <= 0) throw std::runtime_error("max_pos must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw std::runtime_error("dropout must be in [0, 1)");
}

EncoderConfig encoder_preset(const std::string& name) {
  EncoderConfig c;
  if (name == "bert-base") {
    c.vocab_size = 28996;
    c.hidden = 768; c.factorized = 0; c.layers = 12; c.heads = 12; c.ffn = 3072;
    c.use_segments = true; c.use_pooler = true; c.share_weights = false;
  } else if (name == "distil-half") {
    // Distilled variant: half the layers, token-type embeddings and the
    // pooler removed.
    c.vocab_size = 28996;
    c.hidden = 768; c.factorized = 0; c.layers = 6; c.heads = 12; c.ffn = 3072;
    c.use_segments = false; c.use_pooler = false; c.share_weights = false;
  } else if (name == "albert-like") {
    c.vocab_size = 30000;
    c.hidden = 768; c.factorized = 128; c.layers = 12; c.heads = 12; c.ffn = 3072;
    c.use_segments = true; c.use_pooler = true; c.share_weights = true;
  } else if (name == "roberta-like") {
    c.vocab_size = 50265;
    c.hidden = 768; c.factorized = 0; c.layers = 12; c.heads = 12; c.ffn = 3072;
    c.use_segments = false; c.use_pooler = true; c.share_weights = false;
  } else {
    throw std::runtime_error("unknown encoder preset: " + name);
  }
  c.max_pos = 512;
  c.dropout = 0.1;
  return c;
}

namespace {

using nlohmann::json;

json config_to_json(const EncoderConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"hidden", c.hidden},
              {"factorized", c.factorized}, {"layers", c.layers},
              {"heads", c.heads},           {"ffn", c.ffn},
              {"max_pos", c.max_pos},       {"use_segments", c.use_segments},
              {"use_pooler", c.use_pooler}, {"share_weights", c.share_weights},
              {"dropout", c.dropout}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  if (j.contains("preset")) c = encoder_preset(j["preset"].get<std::string>());
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("vocab_size", c.vocab_size);
  get("hidden", c.hidden);
  get("factorized", c.factorized);
  get("layers", c.layers);
  get("heads", c.heads);
  get("ffn", c.ffn);
  get("max_pos", c.max_pos);
  get("use_segments", c.use_segments);
  get("use_pooler", c.use_pooler);
  get("share_weights", c.share_weights);
  get("dropout", c.dropout);
  c.validate();
  return c;
}

}  // namespace

void save_encoder_config(const std::string& path, const EncoderConfig& config) {
  io::write_file(path, config_to_json(config).dump(2) + "\n");
}

EncoderConfig load_encoder_config(const std::string& path) {
  const json j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("malformed config file: " + path);
  return config_from_json(j);
}

void EncodedInput::validate(const EncoderConfig& config) const {
  if (ids.size() != segment_ids.size() || ids.size() != attention_mask.size())
    throw std::runtime_error("encoded input field lengths differ");
  if (ids.empty()) throw std::runtime_error("empty encoded input");
  if (static_cast<std::int64_t>(ids.size()) > config.max_pos)
    throw std::runtime_error("sequence longer than max_pos");
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= config.vocab_size)
      throw std::runtime_error("token id out of range");
    if (segment_ids[i] != 0 && segment_ids[i] != 1)
      throw std::runtime_error("segment id not 0/1");
    if (attention_mask[i] != 0 && attention_mask[i] != 1)
      throw std::runtime_error("attention mask not 0/1");
    if (attention_mask[i] == 0 && ids[i] != 0)
      throw std::runtime_error("masked-out position is not PAD");
  }
}

std::int64_t param_count(const EncoderConfig& c) {
  c.validate();
  const std::int64_t V = c.vocab_size, E = c.hidden, S = c.factorized, L = c.layers,
                     F = c.ffn, P = c.max_pos;
  std::int64_t emb = (S > 0 ? V * S + S * E : V * E) + P * E + (c.use_segments ? 2 * E : 0) +
                     2 * E;  // embedding layer-norm
  std::int64_t per_layer = 4 * (E * E + E)  // q,k,v,o projections
                           + 2 * E          // attention layer-norm
                           + (E * F + F) + (F * E + E)  // feed-forward
                           + 2 * E;         // feed-forward layer-norm
  std::int64_t layers_total = per_layer * (c.share_weights ? 1 : L);
  std::int64_t pooler = c.use_pooler ? E * E + E : 0;
  std::int64_t mlm = E * E + E + 2 * E + V;  // dense + layer-norm + output bias (decoder tied)
  return emb + layers_total + pooler + mlm;
}

ClassifierHead::ClassifierHead(const std::string& name, std::int64_t in_dim,
                               std::int64_t num_classes, Rng& rng)
    : w(name + ".w", Tensor::zeros({in_dim, num_classes})),
      b(name + ".b", Tensor::zeros({num_classes})) {
  for (std::int64_t i = 0; i < w.value.size(); ++i) w.value[i] = rng.normal() * 0.02;
}

Var ClassifierHead::logits(Tape& tape, Var features) {
  return tape.add_rowvec(tape.matmul(features, tape.param(w)), tape.param(b));
}

EncoderModel::EncoderModel(EncoderConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::int64_t V = config_.vocab_size, E = config_.hidden, S = config_.factorized,
                     F = config_.ffn;
  const double std = 0.02;
  if (S > 0) {
    make("embed.token", {V, S}, rng, std);
    make("embed.proj", {S, E}, rng, std);
  } else {
    make("embed.token", {V, E}, rng, std);
  }
  make("embed.pos", {config_.max_pos, E}, rng, std);
  if (config_.use_segments) make("embed.seg", {2, E}, rng, std);
  make("embed.ln.gain", {E}, rng, 0.0).value.fill(1.0);
  make("embed.ln.bias", {E}, rng, 0.0);
  const std::int64_t physical_layers = config_.share_weights ? 1 : config_.layers;
  for (std::int64_t l = 0; l < physical_layers; ++l) {
    const std::string p = "layer." + std::to_string(l) + ".";
    make(p + "attn.wq", {E, E}, rng, std);
    make(p + "attn.bq", {E}, rng, 0.0);
    make(p + "attn.wk", {E, E}, rng, std);
    make(p + "attn.bk", {E}, rng, 0.0);
    make(p + "attn.wv", {E, E}, rng, std);
    make(p + "attn.bv", {E}, rng, 0.0);
    make(p + "attn.wo", {E, E}, rng, std);
    make(p + "attn.bo", {E}, rng, 0.0);
    make(p + "attn.ln.gain", {E}, rng, 0.0).value.fill(1.0);
    make(p + "attn.ln.bias", {E}, rng, 0.0);
    make(p + "ffn.w1", {E, F}, rng, std);
    make(p + "ffn.b1", {F}, rng, 0.0);
    make(p + "ffn.w2", {F, E}, rng, std);
    make(p + "ffn.b2", {E}, rng, 0.0);
    make(p + "ffn.ln.gain", {E}, rng, 0.0).value.fill(1.0);
    make(p + "ffn.ln.bias", {E}, rng, 0.0);
  }
  if (config_.use_pooler) {
    make("pooler.w", {E, E}, rng, std);
    make("pooler.b", {E}, rng, 0.0);
  }
  make("mlm.dense.w", {E, E}, rng, std);
  make("mlm.dense.b", {E}, rng, 0.0);
  make("mlm.ln.gain", {E}, rng, 0.0).value.fill(1.0);
  make("mlm.ln.bias", {E}, rng, 0.0);
  make("mlm.bias", {V}, rng, 0.0);
}

Parameter& EncoderModel::make(const std::string& name, std::vector<std::int64_t> shape, Rng& rng,
                              double init_std) {
  auto p = std::make_unique<Parameter>(name, Tensor::zeros(shape));
  if (init_std > 0.0)
    for (std::int64_t i = 0; i < p->value.size(); ++i) p->value[i] = rng.normal() * init_std;
  Parameter& ref = *p;
  by_name_[name] = p.get();
  owned_.push_back(std::move(p));
  return ref;
}

std::vector<Parameter*> EncoderModel::parameters() {
  std::vector<Parameter*> out;
  out.reserve(owned_.size());
  for (auto& p : owned_) out.push_back(p.get());
  return out;
}

Parameter& EncoderModel::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::runtime_error("no such parameter: " + name);
  return *it->second;
}

Var EncoderModel::embed(Tape& tape, const EncodedInput& input, Rng& rng, bool training) {
  input.validate(config_);
  const std::int64_t T = static_cast<std::int64_t>(input.ids.size());
  Var tok = tape.gather(tape.param(at("embed.token")), input.ids);
  if (config_.factorized > 0) tok = tape.matmul(tok, tape.param(at("embed.proj")));
  std::vector<std::int64_t> positions(static_cast<size_t>(T));
  std::iota(positions.begin(), positions.end(), 0);
  Var x = tape.add(tok, tape.gather(tape.param(at("embed.pos")), positions));
  if (config_.use_segments) {
    std::vector<std::int64_t> segs(input.segment_ids.begin(), input.segment_ids.end());
    x = tape.add(x, tape.gather(tape.param(at("embed.seg")), segs));
  }
  x = tape.layer_norm(x, tape.param(at("embed.ln.gain")), tape.param(at("embed.ln.bias")));
  return tape.dropout(x, config_.dropout, rng, training);
}

Var EncoderModel::encode_forward(Tape& tape, const EncodedInput& input, Rng& rng, bool training) {
  Var x = embed(tape, input, rng, training);
  for (std::int64_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layer." + std::to_string(config_.share_weights ? 0 : l) + ".";
    Var q = tape.add_rowvec(tape.matmul(x, tape.param(at(p + "attn.wq"))),
                            tape.param(at(p + "attn.bq")));
    Var k = tape.add_rowvec(tape.matmul(x, tape.param(at(p + "attn.wk"))),
                            tape.param(at(p + "attn.bk")));
    Var v = tape.add_rowvec(tape.matmul(x, tape.param(at(p + "attn.wv"))),
                            tape.param(at(p + "attn.bv")));
    Var attn = tape.attention(q, k, v, input.attention_mask, config_.heads);
    Var attn_out = tape.add_rowvec(tape.matmul(attn, tape.param(at(p + "attn.wo"))),
                                   tape.param(at(p + "attn.bo")));
    attn_out = tape.dropout(attn_out, config_.dropout, rng, training);
    x = tape.layer_norm(tape.add(x, attn_out), tape.param(at(p + "attn.ln.gain")),
                        tape.param(at(p + "attn.ln.bias")));
    Var h = tape.gelu(tape.add_rowvec(tape.matmul(x, tape.param(at(p + "ffn.w1"))),
                                      tape.param(at(p + "ffn.b1"))));
    Var ffn_out = tape.add_rowvec(tape.matmul(h, tape.param(at(p + "ffn.w2"))),
                                  tape.param(at(p + "ffn.b2")));
    ffn_out = tape.dropout(ffn_out, config_.dropout, rng, training);
    x = tape.layer_norm(tape.add(x, ffn_out), tape.param(at(p + "ffn.ln.gain")),
                        tape.param(at(p + "ffn.ln.bias")));
  }
  return x;
}

Var EncoderModel::mlm_logits(Tape& tape, Var hidden) {
  Var h = tape.add_rowvec(tape.matmul(hidden, tape.param(at("mlm.dense.w"))),
                          tape.param(at("mlm.dense.b")));
  h = tape.gelu(h);
  h = tape.layer_norm(h, tape.param(at("mlm.ln.gain")), tape.param(at("mlm.ln.bias")));
  // Decoder tied to the embedding table; with factorization the hidden
  // state goes back through the S->E projection transpose first.
  Var logits;
  if (config_.factorized > 0) {
    Var s = tape.matmul(h, tape.param(at("embed.proj")), false, true);
    logits = tape.matmul(s, tape.param(at("embed.token")), false, true);
  } else {
    logits = tape.matmul(h, tape.param(at("embed.token")), false, true);
  }
  return tape.add_rowvec(logits, tape.param(at("mlm.bias")));
}

Var EncoderModel::cls_vector(Tape& tape, Var hidden) {
  Var cls = tape.gather(hidden, {0});
  if (!config_.use_pooler) return cls;
  return tape.tanh(tape.add_rowvec(tape.matmul(cls, tape.param(at("pooler.w"))),
                                   tape.param(at("pooler.b"))));
}

Var EncoderModel::cls_logits(Tape& tape, Var hidden, ClassifierHead& head) {
  return head.logits(tape, cls_vector(tape, hidden));
}

Var EncoderModel::token_logits(Tape& tape, Var hidden, ClassifierHead& head) {
  return head.logits(tape, hidden);
}

void hybrid_warm_start(EncoderModel& hybrid_model, EncoderModel& base_model,
                       const Vocabulary& base_vocab, const Vocabulary& hybrid_vocab) {
  const EncoderConfig& hc = hybrid_model.config();
  const EncoderConfig& bc = base_model.config();
  EncoderConfig cmp = hc;
  cmp.vocab_size = bc.vocab_size;
  if (param_count(cmp) != param_count(bc))
    throw std::runtime_error("hybrid warm start requires configs equal except vocab_size");
  if (bc.vocab_size != base_vocab.size() || hc.vocab_size != hybrid_vocab.size())
    throw std::runtime_error("config vocab sizes do not match vocabularies");
  if (hybrid_vocab.size() < base_vocab.size())
    throw std::runtime_error("hybrid vocabulary smaller than base");
  for (std::int64_t i = 0; i < base_vocab.size(); ++i)
    if (base_vocab.tokens[static_cast<size_t>(i)] != hybrid_vocab.tokens[static_cast<size_t>(i)])
      throw std::runtime_error("hybrid vocabulary does not extend the base (token " +
                               std::to_string(i) + " differs)");

  for (nn::Parameter* bp : base_model.parameters()) {
    nn::Parameter& hp = hybrid_model.at(bp->name);
    if (bp->name == "embed.token" || bp->name == "mlm.bias") {
      const std::int64_t cols = bp->name == "embed.token" ? bp->value.cols() : 1;
      const std::int64_t vb = bc.vocab_size;
      for (std::int64_t r = 0; r < vb; ++r)
        for (std::int64_t c = 0; c < cols; ++c)
          hp.value[r * cols + c] = bp->value[r * cols + c];
      // Appended rows: mean of the subword rows of the base encoding.
      for (std::int64_t r = vb; r < hc.vocab_size; ++r) {
        const std::string& word = hybrid_vocab.tokens[static_cast<size_t>(r)];
        const auto pieces = encode(base_vocab, word);
        bool usable = !pieces.empty();
        for (std::int32_t id : pieces) usable &= id != Vocabulary::kUnk;
        if (!usable) continue;  // keep random init when the base cannot encode it
        for (std::int64_t c = 0; c < cols; ++c) {
          double mean = 0.0;
          for (std::int32_t id : pieces) mean += bp->value[id * cols + c];
          hp.value[r * cols + c] = mean / static_cast<double>(pieces.size());
        }
      }
    } else {
      if (hp.value.shape() != bp->value.shape())
        throw std::runtime_error("shape mismatch during warm start: " + bp->name);
      hp.value = bp->value;
    }
    hp.grad = Tensor::zeros(hp.value.shape());
  }
}

}  // namespace lexkit
