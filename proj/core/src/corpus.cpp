// SPDX-License-Identifier: Apache-2.0
#include "lexkit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "lexkit/io.hpp"

namespace lexkit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum_ascii(char c) {
  return is_digit(c) || is_upper(c) || (c >= 'a' && c <= 'z');
}

// Abbreviations whose trailing dot never ends a snippet.
const std::set<std::string>& abbreviations() {
  static const std::set<std::string> kAbbrev = {
      "No.", "Sec.", "Art.", "Inc.", "Ltd.", "Corp.",
      "U.S.", "e.g.", "i.e.", "v.", "St.",
  };
  return kAbbrev;
}

// True when s[i..] begins with an opening quote (ASCII or curly).
bool starts_with_open_quote(const std::string& s, size_t i) {
  if (i >= s.size()) return false;
  if (s[i] == '"' || s[i] == '\'') return true;
  // U+201C and U+2018 in UTF-8.
  if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
      static_cast<unsigned char>(s[i + 1]) == 0x80) {
    const unsigned char b = static_cast<unsigned char>(s[i + 2]);
    return b == 0x9C || b == 0x98;
  }
  return false;
}

// The dotted token ending at position i (inclusive), e.g. "Sec." or "U.S.".
std::string token_ending_at(const std::string& s, size_t i) {
  size_t a = i;
  while (a > 0 && (is_alnum_ascii(s[a - 1]) || s[a - 1] == '.')) --a;
  return s.substr(a, i - a + 1);
}

bool suppressed_dot(const std::string& s, size_t i) {
  const std::string tok = token_ending_at(s, i);
  if (abbreviations().count(tok)) return true;
  // Single uppercase initial: "H." in "George H. Wu".
  if (tok.size() == 2 && is_upper(tok[0])) return true;
  return false;
}

}  // namespace

std::vector<Document> ingest_corpus(const std::string& path) {
  std::vector<Document> docs;
  auto check_text = [](const std::string& name, const std::string& text) {
    if (!io::valid_utf8(text)) throw std::runtime_error("not valid UTF-8: " + name);
    if (text.empty()) throw std::runtime_error("empty document: " + name);
  };
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt")
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Document d;
      d.id = f.filename().string();
      d.text = io::read_file(f.string());
      check_text(d.id, d.text);
      docs.push_back(std::move(d));
    }
  } else if (fs::is_regular_file(path)) {
    std::set<std::string> seen;
    const auto lines = io::split_lines(io::read_file(path));
    for (size_t ln = 0; ln < lines.size(); ++ln) {
      if (lines[ln].empty()) continue;
      json rec = json::parse(lines[ln], nullptr, false);
      if (rec.is_discarded() || !rec.contains("id") || !rec.contains("text"))
        throw std::runtime_error(path + ": line " + std::to_string(ln + 1) +
                                 " is not an {\"id\",\"text\"} record");
      Document d;
      d.id = rec["id"].get<std::string>();
      d.text = rec["text"].get<std::string>();
      check_text(path + "#" + d.id, d.text);
      if (!seen.insert(d.id).second)
        throw std::runtime_error("duplicate document id: " + d.id);
      docs.push_back(std::move(d));
    }
  } else {
    throw std::runtime_error("corpus path not found: " + path);
  }
  if (docs.empty()) throw std::runtime_error("no documents in corpus: " + path);
  return docs;
}

std::vector<Snippet> split_snippets(const Document& doc) {
  const std::string& s = doc.text;
  const size_t n = s.size();
  // Boundary positions: each is the index of the first char NOT in the
  // current snippet (the following whitespace run is skipped afterwards).
  std::vector<size_t> breaks;
  for (size_t i = 0; i < n; ++i) {
    const char c = s[i];
    if (c == '.' || c == '!' || c == '?') {
      size_t j = i + 1;
      if (j >= n || !is_space(s[j])) continue;
      while (j < n && is_space(s[j])) ++j;
      if (j >= n) continue;
      if (!(is_upper(s[j]) || is_digit(s[j]) || starts_with_open_quote(s, j))) continue;
      if (c == '.' && suppressed_dot(s, i)) continue;
      breaks.push_back(i + 1);
    } else if (c == '\n') {
      // Blank-line run: whitespace containing a second newline.
      size_t j = i + 1;
      int newlines = 1;
      while (j < n && is_space(s[j])) {
        if (s[j] == '\n') ++newlines;
        ++j;
      }
      if (newlines >= 2 && j < n) {
        size_t back = i;
        while (back > 0 && is_space(s[back - 1])) --back;
        if (back > 0 && (breaks.empty() || breaks.back() < back)) breaks.push_back(back);
      }
      i = j - 1;
    }
  }
  breaks.push_back(n);

  std::vector<Snippet> out;
  size_t pos = 0;
  for (size_t b : breaks) {
    size_t a = pos;
    while (a < b && is_space(s[a])) ++a;
    size_t e = b;
    while (e > a && is_space(s[e - 1])) --e;
    if (e > a) {
      Snippet sn;
      sn.doc_id = doc.id;
      sn.index = static_cast<std::int64_t>(out.size());
      sn.start = static_cast<std::int64_t>(a);
      sn.end = static_cast<std::int64_t>(e);
      sn.text = s.substr(a, e - a);
      out.push_back(std::move(sn));
    }
    pos = b;
  }
  return out;
}

std::vector<WordSpan> word_spans(const std::string& text) {
  std::vector<WordSpan> spans;
  const size_t n = text.size();
  auto is_word_char = [&](size_t i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c >= 0x80) return true;  // multibyte letters stay inside words
    return is_alnum_ascii(static_cast<char>(c));
  };
  std::int64_t start = -1;
  for (size_t i = 0; i < n; ++i) {
    bool inside;
    if (is_word_char(i)) {
      inside = true;
    } else {
      // internal hyphen/apostrophe
      inside = (text[i] == '-' || text[i] == '\'') && start >= 0 && i + 1 < n && is_word_char(i + 1);
    }
    if (inside) {
      if (start < 0) start = static_cast<std::int64_t>(i);
    } else if (start >= 0) {
      spans.push_back({start, static_cast<std::int64_t>(i)});
      start = -1;
    }
  }
  if (start >= 0) spans.push_back({start, static_cast<std::int64_t>(n)});
  return spans;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  for (const WordSpan& s : word_spans(text))
    words.push_back(text.substr(static_cast<std::size_t>(s.start),
                                static_cast<std::size_t>(s.end - s.start)));
  return words;
}

std::map<std::string, std::int64_t> word_frequencies(const std::vector<Snippet>& snippets) {
  std::map<std::string, std::int64_t> freq;
  for (const Snippet& sn : snippets)
    for (const std::string& w : split_words(sn.text)) ++freq[w];
  return freq;
}

std::int64_t histogram_bucket(std::int64_t token_count) {
  if (token_count >= 500) return 500;
  return (token_count / 10) * 10;
}

CorpusStats sentence_length_report(
    const std::vector<Snippet>& snippets,
    const std::function<std::int64_t(const std::string&)>& tokens_in) {
  if (snippets.empty()) throw std::runtime_error("empty corpus");
  CorpusStats stats;
  std::set<std::string> doc_ids;
  double total = 0.0;
  for (const Snippet& sn : snippets) {
    doc_ids.insert(sn.doc_id);
    const std::int64_t len = tokens_in(sn.text);
    ++stats.tokens_per_snippet_histogram[histogram_bucket(len)];
    total += static_cast<double>(len);
  }
  stats.num_documents = static_cast<std::int64_t>(doc_ids.size());
  stats.num_snippets = static_cast<std::int64_t>(snippets.size());
  stats.word_freq = word_frequencies(snippets);
  stats.mean_tokens_per_snippet = total / static_cast<double>(snippets.size());
  return stats;
}

CorpusStats sentence_length_report(const std::vector<Snippet>& snippets) {
  return sentence_length_report(snippets, [](const std::string& t) {
    return static_cast<std::int64_t>(split_words(t).size());
  });
}

}  // namespace lexkit
