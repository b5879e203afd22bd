// SPDX-License-Identifier: Apache-2.0
#include "lexkit/tasks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "lexkit/io.hpp"
#include "lexkit/optimizer.hpp"
#include "lexkit/tape.hpp"
#include "lexkit/tokenizer.hpp"

namespace lexkit {

using nlohmann::json;
using nn::Reduction;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

const std::vector<Snippet>& snippets_of(const SnippetIndex& index, const std::string& doc_id) {
  auto it = index.find(doc_id);
  if (it == index.end()) throw std::runtime_error("unknown document id '" + doc_id + "'");
  return it->second;
}

const Snippet& snippet_at(const SnippetIndex& index, const std::string& doc_id,
                          std::int64_t snippet_idx) {
  const auto& list = snippets_of(index, doc_id);
  if (snippet_idx < 0 || snippet_idx >= static_cast<std::int64_t>(list.size()))
    throw std::runtime_error("annotation references snippet " + std::to_string(snippet_idx) +
                             " of document '" + doc_id + "', which has " +
                             std::to_string(list.size()) + " snippets");
  return list[static_cast<std::size_t>(snippet_idx)];
}

std::vector<std::int64_t> to_ids64(const std::vector<std::int32_t>& ids) {
  return std::vector<std::int64_t>(ids.begin(), ids.end());
}

}  // namespace

SnippetIndex snippet_index(const std::vector<Document>& documents) {
  SnippetIndex index;
  for (const Document& doc : documents) index[doc.id] = split_snippets(doc);
  return index;
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

std::vector<RetrievalExample> build_retrieval_dataset(
    const std::vector<RetrievalAnnotation>& annotations, const SnippetIndex& snippets, Rng& rng,
    std::int64_t negatives_per_question, std::vector<std::string>* warnings) {
  if (negatives_per_question < 0)
    throw std::invalid_argument("negatives_per_question must be >= 0");
  std::vector<RetrievalExample> out;
  for (const auto& ann : annotations) {
    const auto& doc_snippets = snippets_of(snippets, ann.doc_id);
    std::set<std::int64_t> positives;
    for (const std::int64_t idx : ann.answer_snippet_indices) {
      out.push_back({ann.question, snippet_at(snippets, ann.doc_id, idx), 1});
      positives.insert(idx);
    }
    std::vector<std::int64_t> eligible;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(doc_snippets.size()); ++i)
      if (positives.count(i) == 0) eligible.push_back(i);
    if (static_cast<std::int64_t>(eligible.size()) < negatives_per_question && warnings)
      warnings->push_back("doc '" + ann.doc_id + "' question " + std::to_string(ann.question_id) +
                          ": only " + std::to_string(eligible.size()) +
                          " eligible negatives (wanted " +
                          std::to_string(negatives_per_question) + "); taking all");
    rng.shuffle(eligible);
    const auto take = std::min<std::int64_t>(negatives_per_question,
                                             static_cast<std::int64_t>(eligible.size()));
    std::vector<std::int64_t> chosen(eligible.begin(), eligible.begin() + take);
    std::sort(chosen.begin(), chosen.end());
    for (const std::int64_t idx : chosen)
      out.push_back({ann.question, doc_snippets[static_cast<std::size_t>(idx)], 0});
  }
  return out;
}

std::map<std::int64_t, std::vector<Snippet>> make_answer_groups(
    const std::vector<RetrievalAnnotation>& annotations, const SnippetIndex& snippets) {
  std::map<std::int64_t, std::vector<Snippet>> groups;
  for (const auto& ann : annotations)
    for (const std::int64_t idx : ann.answer_snippet_indices)
      groups[ann.question_id].push_back(snippet_at(snippets, ann.doc_id, idx));
  return groups;
}

namespace {

struct PairKey {
  std::int64_t question_id;
  std::string doc_a;
  std::int64_t idx_a;
  std::string doc_b;
  std::int64_t idx_b;

  bool operator<(const PairKey& o) const {
    return std::tie(question_id, doc_a, idx_a, doc_b, idx_b) <
           std::tie(o.question_id, o.doc_a, o.idx_a, o.doc_b, o.idx_b);
  }
};

PairKey normalized_key(std::int64_t qid, const std::string& da, std::int64_t ia,
                       const std::string& db, std::int64_t ib) {
  if (std::tie(da, ia) <= std::tie(db, ib)) return {qid, da, ia, db, ib};
  return {qid, db, ib, da, ia};
}

}  // namespace

std::vector<SimilarityExample> build_similarity_dataset(
    const std::map<std::int64_t, std::vector<Snippet>>& answer_groups,
    const std::vector<SimilarityPairLabel>& labels, std::int64_t* excluded_count) {
  std::map<PairKey, int> label_of;
  for (const auto& l : labels) {
    const PairKey key =
        normalized_key(l.question_id, l.a.doc_id, l.a.index, l.b.doc_id, l.b.index);
    auto [it, fresh] = label_of.emplace(key, l.label);
    if (!fresh && it->second != l.label)
      throw std::runtime_error("conflicting labels for snippet pair (" + l.a.doc_id + "#" +
                               std::to_string(l.a.index) + ", " + l.b.doc_id + "#" +
                               std::to_string(l.b.index) + ") under question " +
                               std::to_string(l.question_id));
  }

  std::vector<SimilarityExample> out;
  std::int64_t excluded = 0;
  for (const auto& [qid, group] : answer_groups) {
    for (std::size_t i = 0; i < group.size(); ++i) {
      for (std::size_t j = i + 1; j < group.size(); ++j) {
        if (group[i].doc_id == group[j].doc_id) continue;  // cross-document only
        const PairKey key = normalized_key(qid, group[i].doc_id, group[i].index,
                                           group[j].doc_id, group[j].index);
        auto it = label_of.find(key);
        if (it == label_of.end()) {
          ++excluded;
          continue;
        }
        out.push_back({group[i], group[j], it->second});
      }
    }
  }
  if (excluded_count) *excluded_count = excluded;
  return out;
}

std::vector<NerExample> build_ner_dataset(const std::vector<NerAnnotation>& annotations,
                                          const SnippetIndex& snippets, Rng& rng,
                                          std::int64_t negative_snippets,
                                          std::vector<std::string>* warnings) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  // Merge spans per document, keeping first-appearance document order.
  std::map<std::string, std::vector<EntitySpan>> spans_by_doc;
  std::vector<std::string> doc_order;
  for (const auto& ann : annotations) {
    snippets_of(snippets, ann.doc_id);  // existence check
    auto [it, fresh] = spans_by_doc.try_emplace(ann.doc_id);
    if (fresh) doc_order.push_back(ann.doc_id);
    it->second.insert(it->second.end(), ann.spans.begin(), ann.spans.end());
  }

  std::vector<NerExample> out;
  std::set<std::pair<std::string, std::int64_t>> annotated;
  for (const auto& doc_id : doc_order) {
    auto spans = spans_by_doc[doc_id];
    std::sort(spans.begin(), spans.end(),
              [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
    const auto& doc_snippets = snippets_of(snippets, doc_id);
    for (const Snippet& sn : doc_snippets) {
      std::vector<const EntitySpan*> hits;
      for (const auto& sp : spans)
        if (sp.start < sn.end && sp.end > sn.start) hits.push_back(&sp);
      if (hits.empty()) continue;
      annotated.emplace(doc_id, sn.index);

      const std::vector<WordSpan> words = word_spans(sn.text);
      const auto where = [&] { return "doc '" + doc_id + "' snippet " + std::to_string(sn.index); };
      if (words.empty()) {
        warn(where() + ": span covers a snippet without word tokens; skipped");
        continue;
      }
      std::vector<std::string> cls_of(words.size());  // empty = outside
      for (const EntitySpan* sp : hits) {
        const std::int64_t rel_start = std::max<std::int64_t>(sp->start - sn.start, 0);
        const std::int64_t rel_end =
            std::min<std::int64_t>(sp->end - sn.start, sn.end - sn.start);
        std::int64_t first = -1, last = -1;
        for (std::size_t w = 0; w < words.size(); ++w) {
          if (words[w].end <= rel_start || words[w].start >= rel_end) continue;
          if (first < 0) first = static_cast<std::int64_t>(w);
          last = static_cast<std::int64_t>(w);
        }
        if (first < 0) {
          warn(where() + ": span of class '" + sp->cls + "' covers no word tokens; skipped");
          continue;
        }
        const auto& fw = words[static_cast<std::size_t>(first)];
        const auto& lw = words[static_cast<std::size_t>(last)];
        if (fw.start != rel_start || lw.end != rel_end)
          warn(where() + ": snapped span of class '" + sp->cls + "' [" +
               std::to_string(rel_start) + "," + std::to_string(rel_end) +
               ") outward to word boundaries [" + std::to_string(fw.start) + "," +
               std::to_string(lw.end) + ")");
        for (std::int64_t w = first; w <= last; ++w) {
          auto& slot = cls_of[static_cast<std::size_t>(w)];
          if (!slot.empty() && slot != sp->cls)
            throw std::runtime_error("overlapping spans of classes '" + slot + "' and '" +
                                     sp->cls + "' at " + where() + ", word " + std::to_string(w));
          slot = sp->cls;
        }
      }

      NerExample ex;
      ex.doc_id = doc_id;
      ex.snippet_index = sn.index;
      ex.tags.reserve(words.size());
      for (std::size_t w = 0; w < words.size(); ++w) {
        ex.tokens.push_back(sn.text.substr(static_cast<std::size_t>(words[w].start),
                                           static_cast<std::size_t>(words[w].end - words[w].start)));
        if (cls_of[w].empty())
          ex.tags.push_back("O");
        else if (w > 0 && cls_of[w - 1] == cls_of[w])
          ex.tags.push_back("I-" + cls_of[w]);
        else
          ex.tags.push_back("B-" + cls_of[w]);
      }
      out.push_back(std::move(ex));
    }
  }

  // All-O negatives from snippets no span touches.
  std::vector<std::pair<std::string, std::int64_t>> pool;
  for (const auto& [doc_id, doc_snippets] : snippets) {
    for (const Snippet& sn : doc_snippets) {
      if (annotated.count({doc_id, sn.index})) continue;
      if (word_spans(sn.text).empty()) continue;
      pool.emplace_back(doc_id, sn.index);
    }
  }
  rng.shuffle(pool);
  const auto take =
      std::min<std::int64_t>(negative_snippets, static_cast<std::int64_t>(pool.size()));
  std::vector<std::pair<std::string, std::int64_t>> chosen(pool.begin(), pool.begin() + take);
  std::sort(chosen.begin(), chosen.end());
  for (const auto& [doc_id, idx] : chosen) {
    const Snippet& sn = snippets.at(doc_id)[static_cast<std::size_t>(idx)];
    NerExample ex;
    ex.doc_id = doc_id;
    ex.snippet_index = idx;
    ex.tokens = split_words(sn.text);
    ex.tags.assign(ex.tokens.size(), "O");
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<ObligationExample> build_obligation_dataset(
    const std::vector<ObligationLabel>& labels, const SnippetIndex& snippets,
    ClassBalance* balance) {
  std::vector<ObligationExample> out;
  std::set<std::pair<std::string, std::int64_t>> seen;
  ClassBalance bal;
  for (const auto& l : labels) {
    if (l.label != 0 && l.label != 1)
      throw std::runtime_error("non-binary obligation label " + std::to_string(l.label) +
                               " for doc '" + l.doc_id + "' snippet " + std::to_string(l.index));
    if (!seen.emplace(l.doc_id, l.index).second)
      throw std::runtime_error("duplicate obligation label for doc '" + l.doc_id + "' snippet " +
                               std::to_string(l.index));
    out.push_back({snippet_at(snippets, l.doc_id, l.index), l.label});
    bal.positives += l.label;
    ++bal.total;
  }
  if (balance) *balance = bal;
  return out;
}

std::vector<std::string> bio_tag_set(const std::vector<NerExample>& examples) {
  std::set<std::string> classes;
  for (const auto& ex : examples)
    for (const auto& tag : ex.tags)
      if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-')
        classes.insert(tag.substr(2));
  std::vector<std::string> tags{"O"};
  for (const auto& cls : classes) {
    tags.push_back("B-" + cls);
    tags.push_back("I-" + cls);
  }
  return tags;
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

EncodedInput encode_single(const Vocabulary& vocab, const std::string& text,
                           std::int64_t maxlen) {
  if (maxlen < 2) throw std::invalid_argument("maxlen must be at least 2");
  std::vector<std::int64_t> body = to_ids64(encode(vocab, text));
  const auto budget = static_cast<std::size_t>(maxlen - 2);
  if (body.size() > budget) body.resize(budget);
  EncodedInput input;
  input.ids.push_back(Vocabulary::kCls);
  input.ids.insert(input.ids.end(), body.begin(), body.end());
  input.ids.push_back(Vocabulary::kSep);
  input.segment_ids.assign(input.ids.size(), 0);
  input.attention_mask.assign(input.ids.size(), 1);
  return input;
}

EncodedInput encode_pair(const Vocabulary& vocab, const std::string& a, const std::string& b,
                         std::int64_t maxlen) {
  if (maxlen < 3) throw std::invalid_argument("maxlen must be at least 3 for a pair");
  std::vector<std::int64_t> ta = to_ids64(encode(vocab, a));
  std::vector<std::int64_t> tb = to_ids64(encode(vocab, b));
  const auto budget = static_cast<std::size_t>(maxlen - 3);
  while (ta.size() + tb.size() > budget) {
    // Trim the longer segment from its end; a ties-first so the alternation
    // is deterministic.
    if (ta.size() >= tb.size())
      ta.pop_back();
    else
      tb.pop_back();
  }
  EncodedInput input;
  input.ids.push_back(Vocabulary::kCls);
  input.ids.insert(input.ids.end(), ta.begin(), ta.end());
  input.ids.push_back(Vocabulary::kSep);
  const std::size_t seg0 = input.ids.size();
  input.ids.insert(input.ids.end(), tb.begin(), tb.end());
  input.ids.push_back(Vocabulary::kSep);
  input.segment_ids.assign(seg0, 0);
  input.segment_ids.resize(input.ids.size(), 1);
  input.attention_mask.assign(input.ids.size(), 1);
  return input;
}

std::vector<std::string> TaskDataset::group_keys() const {
  std::vector<std::string> keys;
  keys.reserve(examples.size());
  for (const auto& ex : examples) keys.push_back(ex.group_key);
  return keys;
}

TaskDataset encode_retrieval_dataset(const Vocabulary& vocab,
                                     const std::vector<RetrievalExample>& examples,
                                     std::int64_t maxlen) {
  TaskDataset ds;
  ds.kind = TaskKind::Retrieval;
  ds.num_classes = 2;
  for (const auto& ex : examples) {
    EncodedExample enc;
    enc.input = encode_pair(vocab, ex.question, ex.snippet.text, maxlen);
    enc.labels = {ex.label};
    enc.group_key = ex.snippet.doc_id + '\x1f' + ex.question;
    ds.examples.push_back(std::move(enc));
  }
  return ds;
}

TaskDataset encode_similarity_dataset(const Vocabulary& vocab,
                                      const std::vector<SimilarityExample>& examples,
                                      std::int64_t maxlen) {
  TaskDataset ds;
  ds.kind = TaskKind::Similarity;
  ds.num_classes = 2;
  for (const auto& ex : examples) {
    EncodedExample enc;
    enc.input = encode_pair(vocab, ex.snippet_a.text, ex.snippet_b.text, maxlen);
    enc.labels = {ex.label};
    ds.examples.push_back(std::move(enc));
  }
  return ds;
}

TaskDataset encode_ner_dataset(const Vocabulary& vocab, const std::vector<NerExample>& examples,
                               std::int64_t maxlen) {
  if (maxlen < 2) throw std::invalid_argument("maxlen must be at least 2");
  TaskDataset ds;
  ds.kind = TaskKind::Ner;
  ds.tag_set = bio_tag_set(examples);
  ds.num_classes = static_cast<std::int64_t>(ds.tag_set.size());
  std::map<std::string, std::int64_t> tag_id;
  for (std::size_t i = 0; i < ds.tag_set.size(); ++i)
    tag_id[ds.tag_set[i]] = static_cast<std::int64_t>(i);

  for (const auto& ex : examples) {
    if (ex.tokens.size() != ex.tags.size())
      throw std::runtime_error("NER example token/tag length mismatch in doc '" + ex.doc_id +
                               "'");
    EncodedExample enc;
    enc.input.ids.push_back(Vocabulary::kCls);
    enc.labels.push_back(kIgnoreLabel);
    const auto budget = static_cast<std::size_t>(maxlen - 1);  // room for [SEP]
    for (std::size_t w = 0; w < ex.tokens.size(); ++w) {
      const std::vector<std::int64_t> pieces = to_ids64(encode(vocab, ex.tokens[w]));
      if (pieces.empty()) continue;
      if (enc.input.ids.size() + pieces.size() > budget) break;
      for (std::size_t p = 0; p < pieces.size(); ++p) {
        enc.input.ids.push_back(pieces[p]);
        enc.labels.push_back(p == 0 ? tag_id.at(ex.tags[w]) : kIgnoreLabel);
      }
    }
    enc.input.ids.push_back(Vocabulary::kSep);
    enc.labels.push_back(kIgnoreLabel);
    enc.input.segment_ids.assign(enc.input.ids.size(), 0);
    enc.input.attention_mask.assign(enc.input.ids.size(), 1);
    ds.examples.push_back(std::move(enc));
  }
  return ds;
}

TaskDataset encode_obligation_dataset(const Vocabulary& vocab,
                                      const std::vector<ObligationExample>& examples,
                                      std::int64_t maxlen) {
  TaskDataset ds;
  ds.kind = TaskKind::Obligation;
  ds.num_classes = 2;
  for (const auto& ex : examples) {
    EncodedExample enc;
    enc.input = encode_single(vocab, ex.snippet.text, maxlen);
    enc.labels = {ex.label};
    ds.examples.push_back(std::move(enc));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

namespace {

Var mean_of_losses(Tape& tape, const std::vector<Var>& terms) {
  Var sum = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) sum = tape.add(sum, terms[i]);
  return tape.scale(sum, 1.0 / static_cast<double>(terms.size()));
}

/// Per-example cross-entropy over the task's supervised positions.
Var example_loss(Tape& tape, EncoderModel& model, ClassifierHead& head, const TaskDataset& ds,
                 const EncodedExample& ex, Rng& rng, bool training) {
  Var hidden = model.encode_forward(tape, ex.input, rng, training);
  if (ds.kind != TaskKind::Ner) {
    Var logits = model.cls_logits(tape, hidden, head);
    return tape.cross_entropy(logits, {ex.labels[0]}, Reduction::Mean);
  }
  Var logits = model.token_logits(tape, hidden, head);
  std::vector<std::int64_t> positions, labels;
  for (std::size_t t = 0; t < ex.labels.size(); ++t) {
    if (ex.labels[t] == kIgnoreLabel) continue;
    positions.push_back(static_cast<std::int64_t>(t));
    labels.push_back(ex.labels[t]);
  }
  if (positions.empty()) return -1;
  return tape.cross_entropy(tape.gather(logits, positions), labels, Reduction::Mean);
}

std::vector<Tensor> snapshot_values(const std::vector<nn::Parameter*>& params) {
  std::vector<Tensor> values;
  values.reserve(params.size());
  for (const auto* p : params) values.push_back(p->value);
  return values;
}

void restore_values(const std::vector<nn::Parameter*>& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

FinetuneResult finetune(EncoderModel& model, ClassifierHead& head, const TaskDataset& dataset,
                        const SplitIndices& split, const FinetuneConfig& config) {
  if (split.train.empty()) throw std::runtime_error("empty training split");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (config.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  for (const auto& idx : {split.train, split.val, split.test})
    for (const std::int64_t i : idx)
      if (i < 0 || i >= static_cast<std::int64_t>(dataset.examples.size()))
        throw std::out_of_range("split index " + std::to_string(i) + " out of range");

  std::vector<nn::Parameter*> trainable = head.parameters();
  if (!config.freeze_encoder) {
    auto mp = model.parameters();
    trainable.insert(trainable.end(), mp.begin(), mp.end());
  }
  std::vector<nn::Parameter*> all_params = model.parameters();
  for (auto* p : head.parameters()) all_params.push_back(p);

  nn::Adam opt({config.lr, 0.9, 0.999, 1e-8});
  Rng rng(config.seed);
  const bool training = !config.freeze_encoder;  // frozen features stay deterministic

  FinetuneResult result;
  std::vector<Tensor> best;
  double train_seconds = 0.0;
  const std::int64_t patience_limit = std::max<std::int64_t>(config.patience, 1);

  for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::int64_t> order = split.train;
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
      Tape tape;
      std::vector<Var> losses;
      const std::size_t hi =
          std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = b; i < hi; ++i) {
        const auto& ex = dataset.examples[static_cast<std::size_t>(order[i])];
        Var loss = example_loss(tape, model, head, dataset, ex, rng, training);
        if (loss >= 0) losses.push_back(loss);
      }
      if (losses.empty()) continue;
      tape.backward(mean_of_losses(tape, losses));
      opt.step(trainable);
    }
    train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Validation loss without dropout; gradients never consumed.
    double val_sum = 0.0;
    std::int64_t val_n = 0;
    Rng val_rng(0);
    for (const std::int64_t i : split.val) {
      Tape tape;
      Var loss = example_loss(tape, model, head, dataset,
                              dataset.examples[static_cast<std::size_t>(i)], val_rng, false);
      if (loss < 0) continue;
      val_sum += tape.value(loss).item();
      ++val_n;
    }
    if (val_n == 0)
      throw std::runtime_error("validation split has no supervised examples");
    result.val_losses.push_back(val_sum / static_cast<double>(val_n));

    const EarlyStopResult es = early_stopping(result.val_losses, config.patience);
    if (es.best_epoch == epoch) best = snapshot_values(all_params);
    result.best_epoch = es.best_epoch;
    if (epoch - es.best_epoch >= patience_limit) break;
  }

  result.epochs_run = static_cast<std::int64_t>(result.val_losses.size());
  result.train_seconds_per_epoch =
      train_seconds / static_cast<double>(std::max<std::int64_t>(result.epochs_run, 1));
  if (!best.empty()) restore_values(all_params, best);
  return result;
}

// ---------------------------------------------------------------------------
// Prediction & evaluation
// ---------------------------------------------------------------------------

namespace {

std::int64_t argmax_row(const Tensor& t, std::int64_t row) {
  std::int64_t best = 0;
  double best_v = t.at(row, 0);
  for (std::int64_t c = 1; c < t.cols(); ++c) {
    if (t.at(row, c) > best_v) {
      best_v = t.at(row, c);
      best = c;
    }
  }
  return best;
}

}  // namespace

std::vector<int> predict_labels(EncoderModel& model, ClassifierHead& head,
                                const TaskDataset& dataset,
                                const std::vector<std::int64_t>& indices) {
  if (dataset.kind == TaskKind::Ner)
    throw std::invalid_argument("predict_labels is for sequence classification tasks");
  std::vector<int> preds;
  Rng rng(0);
  for (const std::int64_t i : indices) {
    const auto& ex = dataset.examples.at(static_cast<std::size_t>(i));
    Tape tape;
    Var hidden = model.encode_forward(tape, ex.input, rng, false);
    Var logits = model.cls_logits(tape, hidden, head);
    preds.push_back(static_cast<int>(argmax_row(tape.value(logits), 0)));
  }
  return preds;
}

std::vector<std::vector<std::string>> predict_tags(EncoderModel& model, ClassifierHead& head,
                                                   const TaskDataset& dataset,
                                                   const std::vector<std::int64_t>& indices) {
  if (dataset.kind != TaskKind::Ner) throw std::invalid_argument("predict_tags is NER-only");
  std::vector<std::vector<std::string>> out;
  Rng rng(0);
  for (const std::int64_t i : indices) {
    const auto& ex = dataset.examples.at(static_cast<std::size_t>(i));
    Tape tape;
    Var hidden = model.encode_forward(tape, ex.input, rng, false);
    Var logits = model.token_logits(tape, hidden, head);
    const Tensor& values = tape.value(logits);
    std::vector<std::string> tags;
    for (std::size_t t = 0; t < ex.labels.size(); ++t) {
      if (ex.labels[t] == kIgnoreLabel) continue;
      tags.push_back(dataset.tag_set.at(
          static_cast<std::size_t>(argmax_row(values, static_cast<std::int64_t>(t)))));
    }
    out.push_back(std::move(tags));
  }
  return out;
}

std::vector<std::vector<std::string>> gold_tags(const TaskDataset& dataset,
                                                const std::vector<std::int64_t>& indices) {
  if (dataset.kind != TaskKind::Ner) throw std::invalid_argument("gold_tags is NER-only");
  std::vector<std::vector<std::string>> out;
  for (const std::int64_t i : indices) {
    const auto& ex = dataset.examples.at(static_cast<std::size_t>(i));
    std::vector<std::string> tags;
    for (const std::int64_t label : ex.labels)
      if (label != kIgnoreLabel) tags.push_back(dataset.tag_set.at(static_cast<std::size_t>(label)));
    out.push_back(std::move(tags));
  }
  return out;
}

double evaluate_f1(EncoderModel& model, ClassifierHead& head, const TaskDataset& dataset,
                   const std::vector<std::int64_t>& indices) {
  if (dataset.kind == TaskKind::Ner)
    return token_micro_f1(predict_tags(model, head, dataset, indices),
                          gold_tags(dataset, indices));
  const std::vector<int> preds = predict_labels(model, head, dataset, indices);
  std::vector<int> golds;
  for (const std::int64_t i : indices)
    golds.push_back(static_cast<int>(dataset.examples.at(static_cast<std::size_t>(i)).labels[0]));
  return binary_f1(preds, golds);
}

double positive_probability(EncoderModel& model, ClassifierHead& head,
                            const EncodedInput& input) {
  Tape tape;
  Rng rng(0);
  Var hidden = model.encode_forward(tape, input, rng, false);
  Var logits = model.cls_logits(tape, hidden, head);
  const Tensor& row = tape.value(logits);
  if (row.cols() < 2) throw std::invalid_argument("positive_probability needs >= 2 classes");
  double maxv = row.at(0, 0);
  for (std::int64_t c = 1; c < row.cols(); ++c) maxv = std::max(maxv, row.at(0, c));
  double denom = 0.0;
  for (std::int64_t c = 0; c < row.cols(); ++c) denom += std::exp(row.at(0, c) - maxv);
  return std::exp(row.at(0, 1) - maxv) / denom;
}

std::vector<RankedSnippet> rank_snippets(EncoderModel& model, ClassifierHead& head,
                                         const Vocabulary& vocab, const std::string& question,
                                         const std::vector<Snippet>& snippets, std::int64_t k,
                                         std::int64_t maxlen,
                                         std::vector<std::string>* warnings) {
  if (k < 0) throw std::invalid_argument("k must be >= 0");
  if (k > static_cast<std::int64_t>(snippets.size())) {
    if (warnings)
      warnings->push_back("requested top-" + std::to_string(k) + " of " +
                          std::to_string(snippets.size()) + " snippets; returning all");
    k = static_cast<std::int64_t>(snippets.size());
  }
  std::vector<RankedSnippet> scored;
  scored.reserve(snippets.size());
  for (const Snippet& sn : snippets)
    scored.push_back({sn, positive_probability(
                              model, head, encode_pair(vocab, question, sn.text, maxlen))});
  std::stable_sort(scored.begin(), scored.end(), [](const RankedSnippet& a, const RankedSnippet& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.snippet.index < b.snippet.index;
  });
  scored.resize(static_cast<std::size_t>(k));
  return scored;
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

namespace {

std::vector<json> parse_jsonl(const std::string& path) {
  const std::vector<std::string> lines = io::split_lines(io::read_file(path));
  std::vector<json> records;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    json rec = json::parse(lines[ln], nullptr, false);
    if (rec.is_discarded())
      throw std::runtime_error(path + ":" + std::to_string(ln + 1) + ": invalid JSON");
    records.push_back(std::move(rec));
  }
  return records;
}

void write_jsonl(const std::string& path, const std::vector<json>& records) {
  std::string out;
  for (const auto& rec : records) {
    out += rec.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

json snippet_to_json(const Snippet& sn) {
  return json{{"doc_id", sn.doc_id}, {"index", sn.index}, {"text", sn.text},
              {"start", sn.start},   {"end", sn.end}};
}

}  // namespace

std::vector<RetrievalAnnotation> load_retrieval_annotations(const std::string& path) {
  std::vector<RetrievalAnnotation> out;
  for (const json& rec : parse_jsonl(path)) {
    RetrievalAnnotation ann;
    ann.doc_id = rec.at("doc_id").get<std::string>();
    ann.question_id = rec.at("question_id").get<std::int64_t>();
    ann.question = rec.at("question").get<std::string>();
    ann.answer_snippet_indices = rec.at("answer_snippet_indices").get<std::vector<std::int64_t>>();
    out.push_back(std::move(ann));
  }
  return out;
}

void save_retrieval_annotations(const std::string& path,
                                const std::vector<RetrievalAnnotation>& annotations) {
  std::vector<json> records;
  for (const auto& ann : annotations)
    records.push_back(json{{"doc_id", ann.doc_id},
                           {"question_id", ann.question_id},
                           {"question", ann.question},
                           {"answer_snippet_indices", ann.answer_snippet_indices}});
  write_jsonl(path, records);
}

std::vector<NerAnnotation> load_ner_annotations(const std::string& path) {
  std::vector<NerAnnotation> out;
  for (const json& rec : parse_jsonl(path)) {
    NerAnnotation ann;
    ann.doc_id = rec.at("doc_id").get<std::string>();
    for (const json& sp : rec.at("spans"))
      ann.spans.push_back({sp.at("start").get<std::int64_t>(), sp.at("end").get<std::int64_t>(),
                           sp.at("class").get<std::string>()});
    out.push_back(std::move(ann));
  }
  return out;
}

void save_ner_annotations(const std::string& path, const std::vector<NerAnnotation>& annotations) {
  std::vector<json> records;
  for (const auto& ann : annotations) {
    json spans = json::array();
    for (const auto& sp : ann.spans)
      spans.push_back(json{{"start", sp.start}, {"end", sp.end}, {"class", sp.cls}});
    records.push_back(json{{"doc_id", ann.doc_id}, {"spans", std::move(spans)}});
  }
  write_jsonl(path, records);
}

std::vector<SimilarityPairLabel> load_similarity_labels(const std::string& path) {
  std::vector<SimilarityPairLabel> out;
  for (const json& rec : parse_jsonl(path)) {
    const auto qid = rec.at("question_id").get<std::int64_t>();
    for (const json& pair : rec.at("pairs")) {
      SimilarityPairLabel l;
      l.question_id = qid;
      l.a = {pair.at("a").at("doc_id").get<std::string>(),
             pair.at("a").at("index").get<std::int64_t>()};
      l.b = {pair.at("b").at("doc_id").get<std::string>(),
             pair.at("b").at("index").get<std::int64_t>()};
      l.label = pair.at("label").get<int>();
      out.push_back(std::move(l));
    }
  }
  return out;
}

void save_similarity_labels(const std::string& path,
                            const std::vector<SimilarityPairLabel>& labels) {
  // One record per question, pairs in input order.
  std::map<std::int64_t, json> pairs_by_q;
  std::vector<std::int64_t> order;
  for (const auto& l : labels) {
    auto [it, fresh] = pairs_by_q.try_emplace(l.question_id, json::array());
    if (fresh) order.push_back(l.question_id);
    it->second.push_back(
        json{{"a", json{{"doc_id", l.a.doc_id}, {"index", l.a.index}}},
             {"b", json{{"doc_id", l.b.doc_id}, {"index", l.b.index}}},
             {"label", l.label}});
  }
  std::vector<json> records;
  for (const std::int64_t qid : order)
    records.push_back(json{{"question_id", qid}, {"pairs", std::move(pairs_by_q[qid])}});
  write_jsonl(path, records);
}

std::vector<ObligationLabel> load_obligation_labels(const std::string& path) {
  std::vector<ObligationLabel> out;
  for (const json& rec : parse_jsonl(path))
    out.push_back({rec.at("doc_id").get<std::string>(), rec.at("index").get<std::int64_t>(),
                   rec.at("label").get<int>()});
  return out;
}

void save_obligation_labels(const std::string& path, const std::vector<ObligationLabel>& labels) {
  std::vector<json> records;
  for (const auto& l : labels)
    records.push_back(json{{"doc_id", l.doc_id}, {"index", l.index}, {"label", l.label}});
  write_jsonl(path, records);
}

void save_retrieval_examples(const std::string& path,
                             const std::vector<RetrievalExample>& examples) {
  std::vector<json> records;
  for (const auto& ex : examples)
    records.push_back(json{{"question", ex.question},
                           {"snippet", snippet_to_json(ex.snippet)},
                           {"label", ex.label}});
  write_jsonl(path, records);
}

void save_similarity_examples(const std::string& path,
                              const std::vector<SimilarityExample>& examples) {
  std::vector<json> records;
  for (const auto& ex : examples)
    records.push_back(json{{"snippet_a", snippet_to_json(ex.snippet_a)},
                           {"snippet_b", snippet_to_json(ex.snippet_b)},
                           {"label", ex.label}});
  write_jsonl(path, records);
}

void save_ner_examples(const std::string& path, const std::vector<NerExample>& examples) {
  std::vector<json> records;
  for (const auto& ex : examples)
    records.push_back(json{{"doc_id", ex.doc_id},
                           {"snippet_index", ex.snippet_index},
                           {"tokens", ex.tokens},
                           {"tags", ex.tags}});
  write_jsonl(path, records);
}

void save_obligation_examples(const std::string& path,
                              const std::vector<ObligationExample>& examples) {
  std::vector<json> records;
  for (const auto& ex : examples)
    records.push_back(json{{"snippet", snippet_to_json(ex.snippet)}, {"label", ex.label}});
  write_jsonl(path, records);
}

}  // namespace lexkit
