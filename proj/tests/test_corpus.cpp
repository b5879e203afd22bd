// SPDX-License-Identifier: Apache-2.0
// Corpus pipeline tests: file IO, snippet splitting against the rule table,
// word segmentation, stats, and the synthetic generator's statistics.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "lexkit/corpus.hpp"
#include "lexkit/io.hpp"
#include "lexkit/synth.hpp"

using namespace lexkit;
namespace fs = std::filesystem;

namespace {

Document doc(const std::string& text) { return Document{"d", text}; }

std::vector<std::string> snippet_texts(const std::string& text) {
  std::vector<std::string> out;
  for (const Snippet& s : split_snippets(doc(text))) out.push_back(s.text);
  return out;
}

std::string strip_ws(const std::string& s) {
  std::string out;
  for (char c : s)
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') out.push_back(c);
  return out;
}

}  // namespace

TEST_CASE("utf8 validation is strict") {
  CHECK(io::valid_utf8("plain ascii"));
  CHECK(io::valid_utf8("caf\xC3\xA9"));                  // 2-byte
  CHECK(io::valid_utf8("\xE2\x80\x9Cquoted\xE2\x80\x9D"));  // 3-byte curly quotes
  CHECK(io::valid_utf8("\xF0\x9F\x8E\xB2"));             // 4-byte
  CHECK_FALSE(io::valid_utf8("\xC0\xAF"));               // overlong '/'
  CHECK_FALSE(io::valid_utf8("\xED\xA0\x80"));           // UTF-16 surrogate
  CHECK_FALSE(io::valid_utf8("\xF4\x90\x80\x80"));       // above U+10FFFF
  CHECK_FALSE(io::valid_utf8("\xC3"));                   // truncated
  CHECK_FALSE(io::valid_utf8("\x80"));                   // bare continuation
}

TEST_CASE("split_lines and hashes") {
  const auto lines = io::split_lines("a\nb\r\nc\n");
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "a");
  CHECK(lines[1] == "b");
  CHECK(lines[2] == "c");
  CHECK(io::split_lines("").empty());

  // FNV-1a 64 reference vectors.
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(io::hex64(0xcbf29ce484222325ULL) == "cbf29ce484222325");
}

TEST_CASE("snippet splitting follows the rule table") {
  SUBCASE("single terminator") {
    CHECK(snippet_texts("Tenant shall pay rent.") ==
          std::vector<std::string>{"Tenant shall pay rent."});
  }
  SUBCASE("semicolon never splits") {
    CHECK(snippet_texts("Rent is due. Landlord may inspect; upon notice.") ==
          std::vector<std::string>{"Rent is due.", "Landlord may inspect; upon notice."});
  }
  SUBCASE("abbreviation list suppresses the split") {
    CHECK(snippet_texts("See Sec. 3. Tenant agrees.") ==
          std::vector<std::string>{"See Sec. 3.", "Tenant agrees."});
    CHECK(snippet_texts("Acme Inc. Delivers parts.").size() == 1);
    CHECK(snippet_texts("In U.S. Courts this holds.").size() == 1);
    CHECK(snippet_texts("Smith v. Jones settled. Then Art. 4 applied.").size() == 2);
  }
  SUBCASE("single uppercase initials suppress the split") {
    CHECK(snippet_texts("Judge George W. Wu presided. He ruled.").size() == 2);
  }
  SUBCASE("lowercase continuation does not split") {
    CHECK(snippet_texts("Payment is due. on receipt only.").size() == 1);
  }
  SUBCASE("digit and quote starts split") {
    CHECK(snippet_texts("Due 1 May. 2 days later it lapsed.").size() == 2);
    CHECK(snippet_texts("He signed. \"Done,\" she said.").size() == 2);
    CHECK(snippet_texts("He signed. \xE2\x80\x9C Done. \xE2\x80\x9D").size() >= 2);  // curly quote
  }
  SUBCASE("question and exclamation terminate") {
    CHECK(snippet_texts("Is rent due? It is! Pay now.").size() == 3);
  }
  SUBCASE("blank-line runs split without a terminator") {
    const auto t = snippet_texts("Clause one\n\nClause two.");
    REQUIRE(t.size() == 2);
    CHECK(t[0] == "Clause one");
    CHECK(t[1] == "Clause two.");
  }
  SUBCASE("colon and comma never split") {
    CHECK(snippet_texts("Includes: apples, pears, and plums.").size() == 1);
  }
}

TEST_CASE("snippet invariants: spans, coverage, idempotence") {
  const std::string text =
      "Landlord owns 12 King Street. Tenant shall pay $1250 monthly; late fees apply. See "
      "Sec. 4. \"Premises\" shall mean the building.\n\nSigned on January 1, 2021.";
  const Document d{"doc-1", text};
  const auto snippets = split_snippets(d);
  REQUIRE(!snippets.empty());

  std::string joined;
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    const Snippet& s = snippets[i];
    CHECK(s.doc_id == "doc-1");
    CHECK(s.index == static_cast<std::int64_t>(i));
    CHECK(s.text ==
          text.substr(static_cast<std::size_t>(s.start), static_cast<std::size_t>(s.end - s.start)));
    CHECK(!strip_ws(s.text).empty());
    if (i > 0) CHECK(s.start >= snippets[i - 1].end);  // ordered, non-overlapping
    joined += s.text;

    // Idempotence: splitting a snippet's own text yields exactly itself.
    const auto again = split_snippets(Document{"x", s.text});
    REQUIRE(again.size() == 1);
    CHECK(again[0].text == s.text);
  }
  CHECK(strip_ws(joined) == strip_ws(text));  // nothing non-whitespace dropped

  CHECK(split_snippets(Document{"w", "  \n\t  "}).empty());
}

TEST_CASE("corpus ingestion from directory and JSONL") {
  const fs::path dir = fs::temp_directory_path() / "lexkit_ingest_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  io::write_file((dir / "b.txt").string(), "Second document.");
  io::write_file((dir / "a.txt").string(), "First document.");

  auto docs = ingest_corpus(dir.string());
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].id == "a.txt");  // sorted by filename
  CHECK(docs[1].id == "b.txt");
  CHECK(docs[0].text == "First document.");

  const fs::path jl = fs::temp_directory_path() / "lexkit_ingest_test.jsonl";
  io::write_file(jl.string(),
                 "{\"id\":\"x\",\"text\":\"One.\"}\n{\"id\":\"y\",\"text\":\"Two.\"}\n"
                 "{\"id\":\"z\",\"text\":\"Three.\"}\n");
  auto jdocs = ingest_corpus(jl.string());
  REQUIRE(jdocs.size() == 3);
  CHECK(jdocs[1].id == "y");

  io::write_file(jl.string(), "{\"id\":\"x\",\"text\":\"One.\"}\n{\"id\":\"x\",\"text\":\"Dup.\"}\n");
  CHECK_THROWS_WITH_AS(ingest_corpus(jl.string()), doctest::Contains("x"), std::runtime_error);

  io::write_file((dir / "bad.txt").string(), "broken \xC0\xAF bytes");
  CHECK_THROWS_WITH_AS(ingest_corpus(dir.string()), doctest::Contains("bad.txt"),
                       std::runtime_error);

  const fs::path empty_dir = fs::temp_directory_path() / "lexkit_ingest_empty";
  fs::remove_all(empty_dir);
  fs::create_directories(empty_dir);
  CHECK_THROWS_WITH_AS(ingest_corpus(empty_dir.string()), doctest::Contains("no documents"),
                       std::runtime_error);

  fs::remove_all(dir);
  fs::remove_all(empty_dir);
  fs::remove(jl);
}

TEST_CASE("word segmentation and frequencies") {
  auto freq = word_frequencies({Snippet{"d", 0, "a b a", 0, 5}});
  CHECK(freq["a"] == 2);
  CHECK(freq["b"] == 1);

  freq = word_frequencies({Snippet{"d", 0, "attorney-in-fact acts.", 0, 22}});
  CHECK(freq.count("attorney-in-fact") == 1);
  CHECK(freq["acts"] == 1);

  freq = word_frequencies({Snippet{"d", 0, "x y", 0, 3}, Snippet{"d", 1, "y z", 0, 3}});
  CHECK(freq["x"] == 1);
  CHECK(freq["y"] == 2);
  CHECK(freq["z"] == 1);

  // Casing is preserved; apostrophes stay internal; total count == occurrences.
  CHECK(split_words("Tenant's Landlord's") ==
        std::vector<std::string>{"Tenant's", "Landlord's"});
  CHECK(split_words("it -x- 'a'") == std::vector<std::string>{"it", "x", "a"});

  const std::string text = "pre-paid rent, $1250; due 2021.";
  const auto spans = word_spans(text);
  const auto words = split_words(text);
  REQUIRE(spans.size() == words.size());
  for (std::size_t i = 0; i < spans.size(); ++i)
    CHECK(text.substr(static_cast<std::size_t>(spans[i].start),
                      static_cast<std::size_t>(spans[i].end - spans[i].start)) == words[i]);
  CHECK(words[0] == "pre-paid");
}

TEST_CASE("sentence length report") {
  std::vector<Snippet> sn{{"d", 0, "a b", 0, 3}, {"d", 1, "w x y z", 0, 7}};
  CorpusStats stats = sentence_length_report(sn);
  CHECK(stats.mean_tokens_per_snippet == doctest::Approx(3.0));
  CHECK(stats.num_snippets == 2);
  CHECK(stats.num_documents == 1);
  std::int64_t total = 0;
  for (const auto& [bucket, count] : stats.tokens_per_snippet_histogram) total += count;
  CHECK(total == stats.num_snippets);

  CHECK(histogram_bucket(0) == 0);
  CHECK(histogram_bucket(9) == 0);
  CHECK(histogram_bucket(10) == 10);
  CHECK(histogram_bucket(142) == 140);
  CHECK(histogram_bucket(499) == 490);
  CHECK(histogram_bucket(500) == 500);
  CHECK(histogram_bucket(9000) == 500);

  CHECK_THROWS_WITH_AS(sentence_length_report({}), doctest::Contains("empty corpus"),
                       std::runtime_error);
}

TEST_CASE("synthetic generator is deterministic and self-consistent") {
  const SynthCorpus c1 = generate_synthetic_corpus(1, 5);
  const SynthCorpus c2 = generate_synthetic_corpus(1, 5);
  REQUIRE(c1.documents.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(c1.documents[i].id == c2.documents[i].id);
    CHECK(c1.documents[i].text == c2.documents[i].text);
  }
  CHECK(c1.truth.obligation.size() == c2.truth.obligation.size());
  CHECK(c1.truth.similarity.size() == c2.truth.similarity.size());

  const SynthCorpus c3 = generate_synthetic_corpus(2, 5);
  bool differs = false;
  for (std::size_t i = 0; i < 5; ++i) differs = differs || c3.documents[i].text != c1.documents[i].text;
  CHECK(differs);  // seed actually matters

  // Entity offsets index valid text.
  for (const auto& ann : c1.truth.ner) {
    const auto it = std::find_if(c1.documents.begin(), c1.documents.end(),
                                 [&](const Document& d) { return d.id == ann.doc_id; });
    REQUIRE(it != c1.documents.end());
    for (const auto& sp : ann.spans) {
      REQUIRE(sp.start >= 0);
      REQUIRE(sp.end <= static_cast<std::int64_t>(it->text.size()));
      REQUIRE(sp.start < sp.end);
      CHECK(!sp.cls.empty());
      const std::string covered = it->text.substr(static_cast<std::size_t>(sp.start),
                                                  static_cast<std::size_t>(sp.end - sp.start));
      CHECK(!strip_ws(covered).empty());
    }
  }
}

TEST_CASE("every generated sentence is exactly one snippet with one label") {
  const SynthCorpus c = generate_synthetic_corpus(7, 30);
  std::int64_t snippet_count = 0;
  for (const auto& d : c.documents) snippet_count += static_cast<std::int64_t>(split_snippets(d).size());
  CHECK(snippet_count == static_cast<std::int64_t>(c.truth.obligation.size()));

  // Obligation label indices resolve, and label-1 snippets carry "shall"
  // while "shall mean" definitional snippets are labeled 0.
  for (const auto& d : c.documents) {
    const auto snippets = split_snippets(d);
    for (const auto& ol : c.truth.obligation) {
      if (ol.doc_id != d.id) continue;
      REQUIRE(ol.index < static_cast<std::int64_t>(snippets.size()));
      const std::string& text = snippets[static_cast<std::size_t>(ol.index)].text;
      if (ol.label == 1) CHECK(text.find("shall") != std::string::npos);
      if (text.find("shall mean") != std::string::npos) CHECK(ol.label == 0);
    }
  }
}

TEST_CASE("generator statistics match configured weights") {
  // >= 10,000 sentences: 900 docs * [12,20] sentences.
  const SynthCorpus c = generate_synthetic_corpus(42, 900);
  std::int64_t sentences = 0, duty = 0;
  for (const auto& ol : c.truth.obligation) {
    ++sentences;
    duty += ol.label;
  }
  REQUIRE(sentences >= 10000);
  const double duty_rate = static_cast<double>(duty) / static_cast<double>(sentences);
  CHECK(std::abs(duty_rate - 0.24) < 0.02);

  // Entity token fraction matches the closed-form expectation.
  std::int64_t entity_words = 0, total_words = 0;
  for (const auto& d : c.documents) {
    const auto spans = word_spans(d.text);
    total_words += static_cast<std::int64_t>(spans.size());
    const auto ann = std::find_if(c.truth.ner.begin(), c.truth.ner.end(),
                                  [&](const NerAnnotation& a) { return a.doc_id == d.id; });
    if (ann == c.truth.ner.end()) continue;
    for (const auto& w : spans) {
      bool covered = false;
      for (const auto& sp : ann->spans)
        covered = covered || (w.start < sp.end && w.end > sp.start);
      entity_words += covered ? 1 : 0;
    }
  }
  const double fraction = static_cast<double>(entity_words) / static_cast<double>(total_words);
  const double expected = expected_entity_token_fraction();
  CHECK(expected > 0.0);
  CHECK(fraction == doctest::Approx(expected).epsilon(0.15));

  // Similarity pair labels: binary, refs valid, positive share near the
  // variant-collision probability 0.415.
  std::int64_t pos = 0;
  for (const auto& l : c.truth.similarity) {
    CHECK((l.label == 0 || l.label == 1));
    pos += l.label;
  }
  REQUIRE(c.truth.similarity.size() > 500);
  const double pos_rate = static_cast<double>(pos) / static_cast<double>(c.truth.similarity.size());
  CHECK(std::abs(pos_rate - 0.415) < 0.05);

  // Retrieval: every document is annotated for the full question bank.
  CHECK(synth_question_bank().size() == 6);
  std::map<std::string, std::int64_t> per_doc;
  for (const auto& ann : c.truth.retrieval) ++per_doc[ann.doc_id];
  for (const auto& d : c.documents) CHECK(per_doc[d.id] == 6);
}
