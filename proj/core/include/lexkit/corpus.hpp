// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace lexkit {

struct Document {
  std::string id;
  std::string text;
};

/// A unit of legal text produced by punctuation-based splitting. Spans are
/// byte offsets into the owning Document's text; Document.text[start,end)
/// equals text exactly.
struct Snippet {
  std::string doc_id;
  std::int64_t index = 0;
  std::string text;
  std::int64_t start = 0;
  std::int64_t end = 0;
};

struct CorpusStats {
  std::int64_t num_documents = 0;
  std::int64_t num_snippets = 0;
  std::map<std::string, std::int64_t> word_freq;
  /// Keyed by bucket lower bound; width 10, last bucket open-ended at 500.
  std::map<std::int64_t, std::int64_t> tokens_per_snippet_histogram;
  double mean_tokens_per_snippet = 0.0;
};

/// Reads a corpus from a directory of .txt files (id = filename) or a
/// .jsonl file of {"id","text"} records. Throws on unreadable or
/// non-UTF-8 files (naming the file) and on an empty corpus.
std::vector<Document> ingest_corpus(const std::string& path);

/// Splits on sentence-final '.', '!' or '?' followed by whitespace and an
/// uppercase letter, digit or opening quote, and on blank-line runs.
/// ';', ':' and ',' never split; a fixed abbreviation list and single
/// uppercase initials suppress the split after '.'.
std::vector<Snippet> split_snippets(const Document& doc);

/// Word segmentation used for frequency counting: internal hyphens and
/// apostrophes stay inside the word, all other punctuation separates.
std::vector<std::string> split_words(const std::string& text);

struct WordSpan {
  std::int64_t start = 0;
  std::int64_t end = 0;  // byte offsets, [start, end)
};

/// Byte spans of the split_words tokens, in order.
std::vector<WordSpan> word_spans(const std::string& text);

/// Cased word counts over split_words.
std::map<std::string, std::int64_t> word_frequencies(const std::vector<Snippet>& snippets);

/// Histogram and mean of tokens per snippet where `tokens_in` defines the
/// token count of one snippet text. Throws "empty corpus" on no snippets.
CorpusStats sentence_length_report(const std::vector<Snippet>& snippets,
                                   const std::function<std::int64_t(const std::string&)>& tokens_in);

/// Words-mode convenience.
CorpusStats sentence_length_report(const std::vector<Snippet>& snippets);

std::int64_t histogram_bucket(std::int64_t token_count);

}  // namespace lexkit
