// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexkit/corpus.hpp"

namespace lexkit {

enum class Provenance { General, Legal, Hybrid };

struct SvHash {
  using is_transparent = void;
  size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
};

/// Subword vocabulary. Continuation pieces carry a "##" prefix; ids are
/// contiguous with the five specials first.
struct Vocabulary {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::int32_t, SvHash, std::equal_to<>> token_to_id;
  Provenance provenance = Provenance::General;

  static constexpr std::int32_t kPad = 0, kUnk = 1, kCls = 2, kSep = 3, kMask = 4;
  static constexpr std::int32_t kNumSpecials = 5;

  std::int64_t size() const { return static_cast<std::int64_t>(tokens.size()); }
  /// -1 when absent.
  std::int32_t id(std::string_view token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? -1 : it->second;
  }
  bool has(std::string_view token) const { return token_to_id.count(token) != 0; }
};

/// "[PAD]","[UNK]","[CLS]","[SEP]","[MASK]" in id order.
const std::array<std::string, 5>& special_tokens();

/// Builds and validates a vocabulary from the non-special tail; throws on
/// duplicates or special-string collisions.
Vocabulary make_vocabulary(const std::vector<std::string>& non_special_tokens,
                           Provenance provenance);

struct InducedModel {
  Vocabulary vocabulary;
  std::map<std::string, double> scores;  // token → log-probability (unigram mode)
};

enum class InduceMode { Unigram, Bpe };

/// Induces a vocabulary of exactly target_size tokens (specials included).
/// Every corpus character is retained as a single-character token.
/// Throws when target_size is below the minimum feasible size (stating it)
/// or above the maximum attainable one.
InducedModel induce_vocabulary(const std::vector<Snippet>& corpus, std::int64_t target_size,
                               InduceMode mode);

/// Greedy longest-match-first WordPiece-style encoding over whitespace
/// words. A word with no matching prefix (or longer than 100 characters)
/// becomes a single [UNK].
std::vector<std::int32_t> encode(const Vocabulary& vocab, const std::string& text);

/// Inverse of encode modulo whitespace normalization: specials dropped,
/// "##" pieces fused. Throws on out-of-range ids.
std::string decode(const Vocabulary& vocab, const std::vector<std::int32_t>& ids);

/// Appends the K most frequent words that do not already encode to a single
/// non-UNK token, as whole-word tokens with ids V..V+K-1. Base ids are
/// unchanged. Fewer than K eligible → appends all and records a warning.
Vocabulary merge_hybrid(const Vocabulary& base, const std::map<std::string, std::int64_t>& corpus_freq,
                        std::int64_t k, std::vector<std::string>* warnings = nullptr);

/// |shared non-special token strings| / (min(|v1|,|v2|) − 5).
double vocab_overlap(const Vocabulary& v1, const Vocabulary& v2);

/// One token per line, id = line number, trailing newline; byte-exact.
void save_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::string& path, Provenance provenance = Provenance::General);

/// TSV word<TAB>count, descending count then ascending word.
void save_frequencies(const std::string& path, const std::map<std::string, std::int64_t>& freq);
std::map<std::string, std::int64_t> load_frequencies(const std::string& path);

/// Subword-mode length statistics.
CorpusStats sentence_length_report(const std::vector<Snippet>& snippets, const Vocabulary& vocab);

/// Code points of a UTF-8 string, each as its byte sequence.
std::vector<std::string> utf8_chars(std::string_view s);

/// Whitespace tokenization (runs collapsed).
std::vector<std::string> whitespace_words(const std::string& text);

}  // namespace lexkit
