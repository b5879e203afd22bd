// SPDX-License-Identifier: Apache-2.0
// Microbenchmarks for the hot paths: subword encoding, masking, and the
// encoder forward pass. Fixtures are built once and reused across runs.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "lexkit/corpus.hpp"
#include "lexkit/encoder.hpp"
#include "lexkit/objectives.hpp"
#include "lexkit/rng.hpp"
#include "lexkit/synth.hpp"
#include "lexkit/tape.hpp"
#include "lexkit/tokenizer.hpp"

namespace {

using namespace lexkit;

const std::vector<Snippet>& corpus_snippets() {
  static const std::vector<Snippet> snippets = [] {
    const SynthCorpus corpus = generate_synthetic_corpus(1234, 40);
    std::vector<Snippet> out;
    for (const Document& d : corpus.documents)
      for (Snippet& s : split_snippets(d)) out.push_back(std::move(s));
    return out;
  }();
  return snippets;
}

const Vocabulary& bench_vocab() {
  static const Vocabulary vocab =
      induce_vocabulary(corpus_snippets(), 2000, InduceMode::Unigram).vocabulary;
  return vocab;
}

void BM_Encode(benchmark::State& state) {
  const Vocabulary& vocab = bench_vocab();
  const std::vector<Snippet>& snippets = corpus_snippets();
  std::int64_t chars = 0;
  std::size_t i = 0;
  for (auto _ : state) {
    const Snippet& s = snippets[i++ % snippets.size()];
    benchmark::DoNotOptimize(encode(vocab, s.text));
    chars += static_cast<std::int64_t>(s.text.size());
  }
  state.SetBytesProcessed(chars);
}
BENCHMARK(BM_Encode);

void BM_MaskTokens(benchmark::State& state) {
  const std::int64_t seq = state.range(0);
  EncodedInput input;
  Rng ids(5);
  input.ids.push_back(Vocabulary::kCls);
  for (std::int64_t t = 1; t + 1 < seq; ++t)
    input.ids.push_back(5 + static_cast<std::int64_t>(ids.uniform(1995)));
  input.ids.push_back(Vocabulary::kSep);
  input.segment_ids.assign(input.ids.size(), 0);
  input.attention_mask.assign(input.ids.size(), 1);
  Rng rng(7);
  std::int64_t positions = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mask_tokens(input, 2000, rng));
    positions += seq - 2;
  }
  state.SetItemsProcessed(positions);
}
BENCHMARK(BM_MaskTokens)->Arg(128)->Arg(512);

void BM_EncoderForward(benchmark::State& state) {
  const std::int64_t hidden = state.range(0), layers = state.range(1), seq = state.range(2);
  EncoderConfig cfg;
  cfg.vocab_size = 2000;
  cfg.hidden = hidden;
  cfg.layers = layers;
  cfg.heads = hidden / 8 > 0 ? hidden / 8 : 1;
  cfg.ffn = hidden * 2;
  cfg.max_pos = seq;
  cfg.use_segments = false;
  cfg.use_pooler = false;
  cfg.dropout = 0.0;
  EncoderModel model(cfg, 99);

  EncodedInput input;
  Rng ids(5);
  input.ids.push_back(Vocabulary::kCls);
  for (std::int64_t t = 1; t + 1 < seq; ++t)
    input.ids.push_back(5 + static_cast<std::int64_t>(ids.uniform(1995)));
  input.ids.push_back(Vocabulary::kSep);
  input.segment_ids.assign(input.ids.size(), 0);
  input.attention_mask.assign(input.ids.size(), 1);

  Rng rng(0);
  for (auto _ : state) {
    nn::Tape tape;
    benchmark::DoNotOptimize(model.encode_forward(tape, input, rng, /*training=*/false));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * seq);
}
BENCHMARK(BM_EncoderForward)
    ->Args({16, 2, 48})
    ->Args({64, 4, 128})
    ->Args({128, 2, 128});

void BM_TrainStep(benchmark::State& state) {
  const Vocabulary& vocab = bench_vocab();
  EncoderConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.hidden = 32;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.ffn = 64;
  cfg.max_pos = 64;
  cfg.use_segments = false;
  cfg.use_pooler = false;
  EncoderModel model(cfg, 3);
  const std::vector<EncodedInput> packed = pack_sequences(corpus_snippets(), vocab, 64);
  Rng rng(11);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto masked = mask_tokens(packed[i++ % packed.size()], vocab.size(), rng);
    if (!masked) continue;
    for (nn::Parameter* p : model.parameters()) p->zero_grad();
    nn::Tape tape;
    nn::Var h = model.encode_forward(tape, masked->input, rng, /*training=*/true);
    nn::Var logits = model.mlm_logits(tape, h);
    tape.backward(tape.cross_entropy(logits, masked->labels));
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
