// SPDX-License-Identifier: Apache-2.0
#include "lexkit/synth.hpp"

#include <array>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "lexkit/rng.hpp"

namespace lexkit {
namespace {

// Slot pools. All values of a class have the same word count under
// split_words, which keeps the expected entity-token fraction exact.
const std::map<std::string, std::vector<std::string>>& pools() {
  static const std::map<std::string, std::vector<std::string>> kPools = {
      {"Date",
       {"January 1, 2021", "March 15, 2019", "June 30, 2022", "October 5, 2020",
        "April 18, 2023", "December 31, 2024"}},
      {"Money", {"$1250", "$2400", "$875", "$19750", "$3600", "$540"}},
      {"Party",
       {"Acme Holdings", "Beacon Properties", "Crestview Partners", "Dunmore Realty",
        "Evergreen Estates", "Fairfield Group"}},
      {"Judge",
       {"George Wu", "Alice Chen", "Robert Hale", "Maria Lopez", "Samuel Ortiz",
        "Nora Patel"}},
      {"Address",
       {"12 King Street", "47 Elm Avenue", "310 Harbor Road", "88 Crown Court",
        "5 Union Square", "214 Birch Lane"}},
      {"Term",
       {"Premises", "Term", "Rent", "Deposit", "Improvements", "Appurtenances"}},
  };
  return kPools;
}

const std::vector<std::string> kDuty = {
    "Tenant shall pay to Landlord the sum of {Money} on the first day of each calendar month.",
    "Landlord shall maintain the structural elements of the building in good repair throughout the Term.",
    "Tenant shall provide written notice to Landlord at least thirty days before vacating the premises.",
    "Tenant shall keep the premises in a clean and sanitary condition at all times.",
    "Landlord shall deliver possession of the premises to Tenant on {Date}.",
    "Tenant shall obtain and maintain liability insurance in a form reasonably acceptable to Landlord.",
    "Tenant shall reimburse Landlord for any damage caused by the negligence of Tenant or its invitees.",
    "Landlord shall provide heat, water, and electricity to the premises during the Term.",
};

const std::vector<std::string> kDefinition = {
    "\"{Term}\" shall mean the land and buildings described in the attached exhibit.",
    "\"{Term}\" shall mean the period stated in the basic lease provisions.",
    "\"{Term}\" shall mean all amounts payable by Tenant under this Lease.",
    "\"{Term}\" shall mean the fixtures and improvements installed at the property.",
};

const std::vector<std::string> kEntity = {
    "This Lease is dated {Date} and is entered into by {Party}, as Landlord, and {Party}, as Tenant.",
    "The complaint in this matter was filed by {Party} and assigned to Judge {Judge}.",
    "The hearing before Judge {Judge} is scheduled for {Date} at the courthouse located at {Address}.",
    "An initial payment of {Money} was received from {Party} on {Date}.",
};

const std::vector<std::string> kFiller = {
    "This Agreement may be executed in any number of counterparts, each of which is deemed an original.",
    "The headings in this Lease are for convenience of reference only.",
    "Time is of the essence with respect to every provision of this Lease.",
    "If any provision of this Lease is held invalid, the remainder continues in full force and effect.",
    "This Lease is governed by the laws of the state in which the premises are located.",
    "No waiver of any breach is deemed a waiver of any subsequent breach.",
};

struct QuestionSpec {
  const char* question;
  std::array<const char*, 3> variants;
};

// Three paraphrase variants per question; two snippets answering the same
// question match (similarity label 1) iff they use the same variant.
const std::array<QuestionSpec, 6> kQuestions = {{
    {"When does the term of the lease commence?",
     {"The term of this Lease commences on {Date}.",
      "This Lease takes effect beginning on {Date}.",
      "Commencement of the tenancy occurs on {Date}."}},
    {"What is the monthly rent payable by the tenant?",
     {"The monthly rent under this Lease is {Money}.",
      "Rent for the premises is fixed at {Money} per month.",
      "A monthly payment of {Money} is due from the tenant."}},
    {"What is the amount of the security deposit?",
     {"The security deposit held by Landlord equals {Money}.",
      "A deposit of {Money} secures the performance of this Lease.",
      "The deposit amount under this Lease is {Money}."}},
    {"Who are the parties to this lease?",
     {"The parties to this Lease are {Party} and {Party}.",
      "This Lease is between {Party}, as Landlord, and {Party}, as Tenant.",
      "{Party} and {Party} are the parties named in this Lease."}},
    {"On what basis may either party terminate the lease?",
     {"Either party may terminate this Lease upon sixty days written notice.",
      "Termination of this Lease is permitted after sixty days written notice.",
      "This Lease may be terminated by either party on sixty days notice."}},
    {"Where must notices under the lease be delivered?",
     {"All notices under this Lease are to be delivered to {Address}.",
      "Notices are deemed given when delivered to {Address}.",
      "The address for notices under this Lease is {Address}."}},
}};

constexpr std::array<double, 3> kVariantWeights = {0.45, 0.45, 0.10};

struct Instantiated {
  std::string text;
  std::vector<EntitySpan> spans;
};

// Fills {Class} slots. `pick` maps a pool size to a chosen pool index.
template <typename PickFn>
Instantiated instantiate(const std::string& tmpl, PickFn&& pick) {
  Instantiated out;
  size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const size_t close = tmpl.find('}', i);
      if (close == std::string::npos) throw std::logic_error("unterminated slot in template");
      const std::string cls = tmpl.substr(i + 1, close - i - 1);
      const auto it = pools().find(cls);
      if (it == pools().end()) throw std::logic_error("unknown slot class: " + cls);
      const std::string& value = it->second[pick(it->second.size())];
      EntitySpan span;
      span.start = static_cast<std::int64_t>(out.text.size());
      out.text += value;
      span.end = static_cast<std::int64_t>(out.text.size());
      span.cls = cls;
      out.spans.push_back(span);
      i = close + 1;
    } else {
      out.text.push_back(tmpl[i]);
      ++i;
    }
  }
  return out;
}

enum Family { kFamDuty = 0, kFamDefinition, kFamEntity, kFamAnswerable, kFamFiller };

std::array<double, 5> family_cdf(const SynthParams& p) {
  const std::array<double, 5> w = {p.duty_weight, p.definition_weight, p.entity_weight,
                                   p.answerable_weight, p.filler_weight};
  double total = 0.0;
  for (double x : w) {
    if (x < 0.0) throw std::runtime_error("negative template weight");
    total += x;
  }
  if (total <= 0.0) throw std::runtime_error("all template weights zero");
  std::array<double, 5> cdf{};
  double acc = 0.0;
  for (size_t i = 0; i < 5; ++i) {
    acc += w[i] / total;
    cdf[i] = acc;
  }
  cdf[4] = 1.0;
  return cdf;
}

int pick_index(const double* cdf, size_t n, double r) {
  for (size_t i = 0; i < n; ++i)
    if (r < cdf[i]) return static_cast<int>(i);
  return static_cast<int>(n - 1);
}

}  // namespace

const std::vector<std::string>& synth_question_bank() {
  static const std::vector<std::string> kBank = [] {
    std::vector<std::string> qs;
    for (const auto& q : kQuestions) qs.emplace_back(q.question);
    return qs;
  }();
  return kBank;
}

SynthCorpus generate_synthetic_corpus(std::uint64_t seed, std::int64_t num_docs,
                                      const SynthParams& params) {
  if (num_docs <= 0) throw std::runtime_error("num_docs must be > 0");
  if (params.min_sentences <= 0 || params.max_sentences < params.min_sentences)
    throw std::runtime_error("bad sentence count range");
  Rng rng(seed);
  const auto cdf = family_cdf(params);
  std::array<double, 3> vcdf{};
  {
    double acc = 0.0;
    for (size_t i = 0; i < 3; ++i) {
      acc += kVariantWeights[i];
      vcdf[i] = acc;
    }
    vcdf[2] = 1.0;
  }

  SynthCorpus out;
  // Per question: (doc_id, snippet index, variant) of every answer sentence.
  struct AnswerRef {
    std::string doc_id;
    std::int64_t index;
    int variant;
  };
  std::array<std::vector<AnswerRef>, kQuestions.size()> answers;

  for (std::int64_t d = 0; d < num_docs; ++d) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%04lld", static_cast<long long>(d));
    Document doc;
    doc.id = idbuf;
    NerAnnotation ner;
    ner.doc_id = doc.id;
    std::array<std::vector<std::int64_t>, kQuestions.size()> doc_answers{};

    const std::int64_t span_n = params.max_sentences - params.min_sentences + 1;
    const std::int64_t n_sent =
        params.min_sentences + static_cast<std::int64_t>(rng.uniform(static_cast<std::uint64_t>(span_n)));
    for (std::int64_t s = 0; s < n_sent; ++s) {
      const int fam = pick_index(cdf.data(), cdf.size(), rng.uniform_real());
      std::string tmpl;
      int question = -1, variant = -1;
      switch (fam) {
        case kFamDuty: tmpl = kDuty[rng.uniform(kDuty.size())]; break;
        case kFamDefinition: tmpl = kDefinition[rng.uniform(kDefinition.size())]; break;
        case kFamEntity: tmpl = kEntity[rng.uniform(kEntity.size())]; break;
        case kFamFiller: tmpl = kFiller[rng.uniform(kFiller.size())]; break;
        case kFamAnswerable:
          question = static_cast<int>(rng.uniform(kQuestions.size()));
          variant = pick_index(vcdf.data(), vcdf.size(), rng.uniform_real());
          tmpl = kQuestions[static_cast<size_t>(question)].variants[static_cast<size_t>(variant)];
          break;
      }
      Instantiated inst =
          instantiate(tmpl, [&rng](size_t n) { return static_cast<size_t>(rng.uniform(n)); });
      if (!doc.text.empty()) doc.text += " ";
      const std::int64_t offset = static_cast<std::int64_t>(doc.text.size());
      doc.text += inst.text;
      for (EntitySpan sp : inst.spans) {
        sp.start += offset;
        sp.end += offset;
        ner.spans.push_back(sp);
      }
      out.truth.obligation.push_back({doc.id, s, fam == kFamDuty ? 1 : 0});
      if (question >= 0) {
        doc_answers[static_cast<size_t>(question)].push_back(s);
        answers[static_cast<size_t>(question)].push_back({doc.id, s, variant});
      }
    }
    for (size_t q = 0; q < kQuestions.size(); ++q) {
      RetrievalAnnotation ra;
      ra.doc_id = doc.id;
      ra.question_id = static_cast<std::int64_t>(q);
      ra.question = kQuestions[q].question;
      ra.answer_snippet_indices = doc_answers[q];
      out.truth.retrieval.push_back(std::move(ra));
    }
    out.truth.ner.push_back(std::move(ner));
    out.documents.push_back(std::move(doc));
  }

  // Similarity labels: all cross-document pairs within each question's
  // answer group, capped per question by a seeded shuffle.
  for (size_t q = 0; q < kQuestions.size(); ++q) {
    const auto& refs = answers[q];
    std::vector<std::pair<size_t, size_t>> cand;
    for (size_t i = 0; i < refs.size(); ++i)
      for (size_t j = i + 1; j < refs.size(); ++j)
        if (refs[i].doc_id != refs[j].doc_id) cand.emplace_back(i, j);
    if (static_cast<std::int64_t>(cand.size()) > params.max_pairs_per_question) {
      rng.shuffle(cand);
      cand.resize(static_cast<size_t>(params.max_pairs_per_question));
    }
    for (const auto& [i, j] : cand) {
      SimilarityPairLabel pl;
      pl.question_id = static_cast<std::int64_t>(q);
      pl.a = {refs[i].doc_id, refs[i].index};
      pl.b = {refs[j].doc_id, refs[j].index};
      pl.label = refs[i].variant == refs[j].variant ? 1 : 0;
      out.truth.similarity.push_back(std::move(pl));
    }
  }
  return out;
}

double expected_entity_token_fraction(const SynthParams& params) {
  const auto cdf = family_cdf(params);
  std::array<double, 5> w{};
  double prev = 0.0;
  for (size_t i = 0; i < 5; ++i) {
    w[i] = cdf[i] - prev;
    prev = cdf[i];
  }
  double entity_words = 0.0, total_words = 0.0;
  auto add = [&](const std::string& tmpl, double prob) {
    Instantiated inst = instantiate(tmpl, [](size_t) { return size_t{0}; });
    const auto words = split_words(inst.text);
    double in_entity = 0.0;
    // Recover word byte ranges to intersect with spans.
    size_t cursor = 0;
    for (const auto& word : words) {
      const size_t at = inst.text.find(word, cursor);
      const std::int64_t ws = static_cast<std::int64_t>(at);
      const std::int64_t we = static_cast<std::int64_t>(at + word.size());
      cursor = at + word.size();
      for (const auto& sp : inst.spans)
        if (ws < sp.end && sp.start < we) {
          in_entity += 1.0;
          break;
        }
    }
    entity_words += prob * in_entity;
    total_words += prob * static_cast<double>(words.size());
  };
  for (const auto& t : kDuty) add(t, w[kFamDuty] / static_cast<double>(kDuty.size()));
  for (const auto& t : kDefinition)
    add(t, w[kFamDefinition] / static_cast<double>(kDefinition.size()));
  for (const auto& t : kEntity) add(t, w[kFamEntity] / static_cast<double>(kEntity.size()));
  for (const auto& t : kFiller) add(t, w[kFamFiller] / static_cast<double>(kFiller.size()));
  for (const auto& q : kQuestions)
    for (size_t v = 0; v < 3; ++v)
      add(q.variants[v],
          w[kFamAnswerable] / static_cast<double>(kQuestions.size()) * kVariantWeights[v]);
  return entity_words / total_words;
}

}  // namespace lexkit
