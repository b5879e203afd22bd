// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lexkit/corpus.hpp"

namespace lexkit {

/// Ground-truth annotation records. Shapes mirror the JSONL schemas consumed
/// by the task dataset builders.
struct RetrievalAnnotation {
  std::string doc_id;
  std::int64_t question_id = 0;
  std::string question;
  std::vector<std::int64_t> answer_snippet_indices;
};

struct EntitySpan {
  std::int64_t start = 0;  // byte offsets into Document.text
  std::int64_t end = 0;
  std::string cls;
};

struct NerAnnotation {
  std::string doc_id;
  std::vector<EntitySpan> spans;
};

struct PairRef {
  std::string doc_id;
  std::int64_t index = 0;
};

struct SimilarityPairLabel {
  std::int64_t question_id = 0;
  PairRef a, b;
  int label = 0;
};

struct ObligationLabel {
  std::string doc_id;
  std::int64_t index = 0;
  int label = 0;
};

struct GroundTruth {
  std::vector<RetrievalAnnotation> retrieval;
  std::vector<NerAnnotation> ner;
  std::vector<SimilarityPairLabel> similarity;
  std::vector<ObligationLabel> obligation;  // one per snippet
};

/// Sentence-family mixture. Duty sentences are the positive obligation
/// class, so the duty weight is also the expected positive rate (default
/// echoes the 24% balance of the reference annotation set).
struct SynthParams {
  double duty_weight = 0.24;
  double definition_weight = 0.12;
  double entity_weight = 0.16;
  double answerable_weight = 0.28;
  double filler_weight = 0.20;
  std::int64_t min_sentences = 12;
  std::int64_t max_sentences = 20;
  std::int64_t max_pairs_per_question = 2000;
};

struct SynthCorpus {
  std::vector<Document> documents;
  GroundTruth truth;
};

/// Deterministic template-based lease/litigation corpus with known labels:
/// duty sentences ("Tenant shall ..."), definitional modals ("'X' shall
/// mean ..."), entity slots at known offsets, and question→answer-snippet
/// mappings. Every generated sentence becomes exactly one snippet under
/// split_snippets.
SynthCorpus generate_synthetic_corpus(std::uint64_t seed, std::int64_t num_docs,
                                      const SynthParams& params = {});

/// Expected fraction of words covered by an entity span, computed exactly
/// from the template tables and mixture weights (every pool value of a
/// class has a fixed word count).
double expected_entity_token_fraction(const SynthParams& params = {});

const std::vector<std::string>& synth_question_bank();

}  // namespace lexkit
