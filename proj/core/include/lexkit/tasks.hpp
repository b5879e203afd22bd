// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lexkit/corpus.hpp"
#include "lexkit/encoder.hpp"
#include "lexkit/eval.hpp"
#include "lexkit/nn.hpp"
#include "lexkit/rng.hpp"
#include "lexkit/synth.hpp"

namespace lexkit {

struct Vocabulary;

// ---------------------------------------------------------------------------
// Task example types
// ---------------------------------------------------------------------------

struct RetrievalExample {
  std::string question;
  Snippet snippet;
  int label = 0;  // 1 iff the snippet is annotated as containing the answer
};

struct SimilarityExample {
  Snippet snippet_a, snippet_b;
  int label = 0;
};

/// Word-level sequence labeling example; tags are BIO over entity classes
/// plus "O", one per token.
struct NerExample {
  std::string doc_id;
  std::int64_t snippet_index = 0;
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
};

struct ObligationExample {
  Snippet snippet;
  int label = 0;
};

/// doc_id -> snippets in document order.
using SnippetIndex = std::map<std::string, std::vector<Snippet>>;

SnippetIndex snippet_index(const std::vector<Document>& documents);

// ---------------------------------------------------------------------------
// Dataset builders
// ---------------------------------------------------------------------------

/// Positives: every annotated (question, snippet) pair. Negatives: uniform
/// draws without replacement from the same document's non-answer snippets
/// (all of them, with a warning, when fewer than requested exist).
std::vector<RetrievalExample> build_retrieval_dataset(
    const std::vector<RetrievalAnnotation>& annotations, const SnippetIndex& snippets, Rng& rng,
    std::int64_t negatives_per_question = 10, std::vector<std::string>* warnings = nullptr);

/// Answer groups per question: all snippets annotated as answering it.
std::map<std::int64_t, std::vector<Snippet>> make_answer_groups(
    const std::vector<RetrievalAnnotation>& annotations, const SnippetIndex& snippets);

/// Cross-document pairs within each question's answer group. Pairs without
/// an expert label are excluded; the count is reported through
/// `excluded_count` when given.
std::vector<SimilarityExample> build_similarity_dataset(
    const std::map<std::int64_t, std::vector<Snippet>>& answer_groups,
    const std::vector<SimilarityPairLabel>& labels, std::int64_t* excluded_count = nullptr);

/// BIO-tags annotated snippets (spans snapped outward to word boundaries,
/// with a warning per snap) plus up to `negative_snippets` all-O snippets
/// drawn from the un-annotated remainder. Overlapping spans of different
/// classes are an error naming the conflict.
std::vector<NerExample> build_ner_dataset(const std::vector<NerAnnotation>& annotations,
                                          const SnippetIndex& snippets, Rng& rng,
                                          std::int64_t negative_snippets = 20000,
                                          std::vector<std::string>* warnings = nullptr);

struct ClassBalance {
  std::int64_t positives = 0;
  std::int64_t total = 0;
  double positive_rate() const {
    return total == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(total);
  }
};

/// Pass-through with validation: labels binary, snippet ids resolvable,
/// no duplicate (doc, index).
std::vector<ObligationExample> build_obligation_dataset(
    const std::vector<ObligationLabel>& labels, const SnippetIndex& snippets,
    ClassBalance* balance = nullptr);

/// Tag inventory over the examples: "O" first, then B-X/I-X per class in
/// sorted order.
std::vector<std::string> bio_tag_set(const std::vector<NerExample>& examples);

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

/// [CLS] s [SEP]; tokens beyond maxlen-2 are dropped from the end.
EncodedInput encode_single(const Vocabulary& vocab, const std::string& text,
                           std::int64_t maxlen = 512);

/// [CLS] a [SEP] b [SEP] with segment ids 0/1; over budget, tokens come off
/// the end of the longer segment first, alternating on ties.
EncodedInput encode_pair(const Vocabulary& vocab, const std::string& a, const std::string& b,
                         std::int64_t maxlen = 512);

enum class TaskKind { Retrieval, Ner, Similarity, Obligation };

/// Ignore marker for unsupervised positions in per-token label vectors.
inline constexpr std::int64_t kIgnoreLabel = nn::kIgnoreLabel;

struct EncodedExample {
  EncodedInput input;
  /// Sequence classification: one element. NER: one per position, the tag id
  /// on each word's first subword and kIgnoreLabel elsewhere.
  std::vector<std::int64_t> labels;
  std::string group_key;  // retrieval: doc + question, for leakage-free splits
};

struct TaskDataset {
  TaskKind kind = TaskKind::Obligation;
  std::int64_t num_classes = 2;
  std::vector<std::string> tag_set;  // NER only
  std::vector<EncodedExample> examples;

  std::vector<std::string> group_keys() const;
};

TaskDataset encode_retrieval_dataset(const Vocabulary& vocab,
                                     const std::vector<RetrievalExample>& examples,
                                     std::int64_t maxlen = 512);
TaskDataset encode_similarity_dataset(const Vocabulary& vocab,
                                      const std::vector<SimilarityExample>& examples,
                                      std::int64_t maxlen = 512);
/// Words are encoded one at a time so tag alignment is exact; a word whose
/// pieces do not fit the remaining budget ends the sequence.
TaskDataset encode_ner_dataset(const Vocabulary& vocab, const std::vector<NerExample>& examples,
                               std::int64_t maxlen = 512);
TaskDataset encode_obligation_dataset(const Vocabulary& vocab,
                                      const std::vector<ObligationExample>& examples,
                                      std::int64_t maxlen = 512);

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

struct FinetuneConfig {
  std::int64_t max_epochs = 20;
  std::int64_t batch_size = 16;
  double lr = 3e-5;
  std::int64_t patience = 3;
  bool freeze_encoder = false;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  std::vector<double> val_losses;  // one per epoch run
  std::int64_t best_epoch = 0;     // 1-based; weights restored to this epoch
  std::int64_t epochs_run = 0;
  double train_seconds_per_epoch = 0.0;
};

/// Cross-entropy training of head + encoder end-to-end (head only when
/// frozen), early stopping on validation loss with best-epoch weights
/// restored. Deterministic per seed. Throws on an empty training split.
FinetuneResult finetune(EncoderModel& model, ClassifierHead& head, const TaskDataset& dataset,
                        const SplitIndices& split, const FinetuneConfig& config);

// ---------------------------------------------------------------------------
// Prediction & task evaluation
// ---------------------------------------------------------------------------

/// Argmax class per example (sequence classification tasks).
std::vector<int> predict_labels(EncoderModel& model, ClassifierHead& head,
                                const TaskDataset& dataset,
                                const std::vector<std::int64_t>& indices);

/// Predicted tags at supervised positions, per example (NER).
std::vector<std::vector<std::string>> predict_tags(EncoderModel& model, ClassifierHead& head,
                                                   const TaskDataset& dataset,
                                                   const std::vector<std::int64_t>& indices);

/// Gold tags at supervised positions, per example (NER).
std::vector<std::vector<std::string>> gold_tags(const TaskDataset& dataset,
                                                const std::vector<std::int64_t>& indices);

/// Binary F1 for sequence classification, token-level micro F1 for NER.
double evaluate_f1(EncoderModel& model, ClassifierHead& head, const TaskDataset& dataset,
                   const std::vector<std::int64_t>& indices);

/// Softmax probability of class 1 (binary heads).
double positive_probability(EncoderModel& model, ClassifierHead& head, const EncodedInput& input);

struct RankedSnippet {
  Snippet snippet;
  double score = 0.0;
};

/// Top-K snippets by positive-class probability of the (question, snippet)
/// pair classifier; ties broken by snippet index. K beyond |snippets|
/// returns all with a warning.
std::vector<RankedSnippet> rank_snippets(EncoderModel& model, ClassifierHead& head,
                                         const Vocabulary& vocab, const std::string& question,
                                         const std::vector<Snippet>& snippets, std::int64_t k,
                                         std::int64_t maxlen = 512,
                                         std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Annotation & dataset JSONL
// ---------------------------------------------------------------------------

std::vector<RetrievalAnnotation> load_retrieval_annotations(const std::string& path);
void save_retrieval_annotations(const std::string& path,
                                const std::vector<RetrievalAnnotation>& annotations);

std::vector<NerAnnotation> load_ner_annotations(const std::string& path);
void save_ner_annotations(const std::string& path, const std::vector<NerAnnotation>& annotations);

std::vector<SimilarityPairLabel> load_similarity_labels(const std::string& path);
void save_similarity_labels(const std::string& path,
                            const std::vector<SimilarityPairLabel>& labels);

std::vector<ObligationLabel> load_obligation_labels(const std::string& path);
void save_obligation_labels(const std::string& path, const std::vector<ObligationLabel>& labels);

void save_retrieval_examples(const std::string& path,
                             const std::vector<RetrievalExample>& examples);
void save_similarity_examples(const std::string& path,
                              const std::vector<SimilarityExample>& examples);
void save_ner_examples(const std::string& path, const std::vector<NerExample>& examples);
void save_obligation_examples(const std::string& path,
                              const std::vector<ObligationExample>& examples);

}  // namespace lexkit
