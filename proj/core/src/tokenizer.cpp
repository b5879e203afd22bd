// SPDX-License-Identifier: Apache-2.0
#include "lexkit/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lexkit/io.hpp"

namespace lexkit {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr size_t kMaxWordChars = 100;   // longer words encode to [UNK]
constexpr size_t kMaxPieceChars = 12;   // unigram candidate substring cap
constexpr size_t kSeedWordCap = 100000; // unigram seeding considers this many words

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_special_string(const std::string& s) {
  for (const auto& sp : special_tokens())
    if (s == sp) return true;
  return false;
}

// Distinct corpus words with counts, ordered for determinism.
std::map<std::string, std::int64_t> collect_words(const std::vector<Snippet>& corpus) {
  std::map<std::string, std::int64_t> words;
  for (const Snippet& sn : corpus)
    for (const std::string& w : whitespace_words(sn.text)) ++words[w];
  return words;
}

std::string strip_cont(const std::string& s) {
  return s.rfind("##", 0) == 0 ? s.substr(2) : s;
}

// ---------------------------------------------------------------------------
// BPE induction.
//
// Mandatory tokens are the specials plus one plain single-character token per
// distinct corpus character. Continuation singles ("##c") are working symbols:
// they stay in the vocabulary only while they still occur in the corpus
// segmentation, can be pruned (ascending frequency) when the target leaves no
// room, and are revived (descending frequency) when merges stall short of the
// target. Merge outputs are kept once created.
// ---------------------------------------------------------------------------

struct BpeState {
  std::vector<std::string> sym;                 // interned symbol strings
  std::map<std::string, int> sym_id;
  std::vector<std::vector<int>> seqs;           // one per distinct word
  std::vector<std::int64_t> counts;

  int intern(const std::string& s) {
    auto it = sym_id.find(s);
    if (it != sym_id.end()) return it->second;
    const int id = static_cast<int>(sym.size());
    sym.push_back(s);
    sym_id.emplace(s, id);
    return id;
  }

  std::map<int, std::int64_t> occurrences() const {
    std::map<int, std::int64_t> occ;
    for (size_t w = 0; w < seqs.size(); ++w)
      for (int s : seqs[w]) occ[s] += counts[w];
    return occ;
  }
};

// Replaces adjacent (l,r) by m, left-to-right non-overlapping.
void apply_merge(std::vector<std::vector<int>>& seqs, int l, int r, int m) {
  for (auto& seq : seqs) {
    if (seq.size() < 2) continue;
    std::vector<int> out;
    out.reserve(seq.size());
    size_t i = 0;
    while (i < seq.size()) {
      if (i + 1 < seq.size() && seq[i] == l && seq[i + 1] == r) {
        out.push_back(m);
        i += 2;
      } else {
        out.push_back(seq[i]);
        ++i;
      }
    }
    seq = std::move(out);
  }
}

InducedModel induce_bpe(const std::map<std::string, std::int64_t>& words,
                        std::int64_t target_size) {
  BpeState st;
  std::set<std::string> plain_singles;
  std::set<std::string> cont_singles;
  for (const auto& [word, count] : words) {
    const auto cps = utf8_chars(word);
    std::vector<int> seq;
    seq.reserve(cps.size());
    for (size_t i = 0; i < cps.size(); ++i) {
      plain_singles.insert(cps[i]);
      const std::string s = i == 0 ? cps[i] : "##" + cps[i];
      if (i > 0) cont_singles.insert(s);
      seq.push_back(st.intern(s));
    }
    st.seqs.push_back(std::move(seq));
    st.counts.push_back(count);
  }
  // Plain singles for characters that never start a word.
  for (const std::string& c : plain_singles) st.intern(c);

  const std::int64_t min_feasible = 5 + static_cast<std::int64_t>(plain_singles.size());
  if (target_size < min_feasible)
    throw std::runtime_error("target_size too small; minimum feasible size is " +
                             std::to_string(min_feasible));

  auto initial_occ = st.occurrences();
  std::set<std::string> pruned;   // continuation singles dropped up front
  std::vector<std::string> merges;
  std::set<std::string> vocab_set(plain_singles.begin(), plain_singles.end());

  auto occ_of = [&](const std::map<int, std::int64_t>& occ, const std::string& s) {
    auto it = st.sym_id.find(s);
    if (it == st.sym_id.end()) return std::int64_t{0};
    auto o = occ.find(it->second);
    return o == occ.end() ? std::int64_t{0} : o->second;
  };
  auto effective_size = [&](const std::map<int, std::int64_t>& occ) {
    std::int64_t live = 0;
    for (const std::string& c : cont_singles)
      if (!pruned.count(c) && occ_of(occ, c) > 0) ++live;
    return 5 + static_cast<std::int64_t>(plain_singles.size()) + live +
           static_cast<std::int64_t>(merges.size());
  };

  auto occ = st.occurrences();
  if (effective_size(occ) > target_size) {
    std::vector<std::pair<std::int64_t, std::string>> order;  // (freq, token) ascending
    for (const std::string& c : cont_singles) order.emplace_back(occ_of(occ, c), c);
    std::sort(order.begin(), order.end());
    for (const auto& [freq, c] : order) {
      if (effective_size(occ) <= target_size) break;
      pruned.insert(c);
    }
  }

  while (true) {
    std::map<std::pair<int, int>, std::int64_t> pair_counts;
    for (size_t w = 0; w < st.seqs.size(); ++w)
      for (size_t i = 0; i + 1 < st.seqs[w].size(); ++i)
        pair_counts[{st.seqs[w][i], st.seqs[w][i + 1]}] += st.counts[w];
    if (pair_counts.empty()) break;

    struct Cand {
      std::int64_t count;
      std::string l, r;
      int lid, rid;
    };
    std::vector<Cand> cands;
    cands.reserve(pair_counts.size());
    for (const auto& [pr, c] : pair_counts)
      cands.push_back({c, st.sym[pr.first], st.sym[pr.second], pr.first, pr.second});
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.count != b.count) return a.count > b.count;
      if (a.l != b.l) return a.l < b.l;
      return a.r < b.r;
    });

    const std::int64_t cur = effective_size(occ);
    bool committed = false;
    for (const Cand& cand : cands) {
      const std::string merged = cand.l + strip_cont(cand.r);
      const bool is_new = !vocab_set.count(merged) &&
                          std::find(merges.begin(), merges.end(), merged) == merges.end();
      if (cur + (is_new ? 1 : 0) > target_size) {
        // Exact size requires simulating which continuation singles die.
        auto trial = st.seqs;
        const int mid = st.intern(merged);
        apply_merge(trial, cand.lid, cand.rid, mid);
        std::map<int, std::int64_t> trial_occ;
        for (size_t w = 0; w < trial.size(); ++w)
          for (int s : trial[w]) trial_occ[s] += st.counts[w];
        std::int64_t live = 0;
        for (const std::string& c : cont_singles) {
          auto it = st.sym_id.find(c);
          if (!pruned.count(c) && it != st.sym_id.end() && trial_occ.count(it->second) &&
              trial_occ[it->second] > 0)
            ++live;
        }
        const std::int64_t post = 5 + static_cast<std::int64_t>(plain_singles.size()) + live +
                                  static_cast<std::int64_t>(merges.size()) + (is_new ? 1 : 0);
        if (post > target_size) continue;
        st.seqs = std::move(trial);
        occ = st.occurrences();
      } else {
        const int mid = st.intern(merged);
        apply_merge(st.seqs, cand.lid, cand.rid, mid);
        occ = st.occurrences();
      }
      if (is_new) merges.push_back(merged);
      committed = true;
      break;
    }
    if (!committed) break;
  }

  std::set<std::string> revived;
  if (effective_size(occ) < target_size) {
    std::vector<std::pair<std::int64_t, std::string>> order;  // by initial freq desc, lex asc
    for (const std::string& c : cont_singles)
      if (!pruned.count(c) && occ_of(occ, c) == 0)
        order.emplace_back(-occ_of(initial_occ, c), c);
    std::sort(order.begin(), order.end());
    for (const auto& [negfreq, c] : order) {
      if (effective_size(occ) + static_cast<std::int64_t>(revived.size()) >= target_size) break;
      revived.insert(c);
    }
  }
  const std::int64_t final_size =
      effective_size(occ) + static_cast<std::int64_t>(revived.size());
  if (final_size != target_size)
    throw std::runtime_error("target_size exceeds maximum attainable vocabulary size " +
                             std::to_string(final_size) + " for this corpus");

  std::vector<std::string> tail(plain_singles.begin(), plain_singles.end());
  for (const std::string& c : cont_singles)
    if (!pruned.count(c) && (occ_of(occ, c) > 0 || revived.count(c))) tail.push_back(c);
  tail.insert(tail.end(), merges.begin(), merges.end());

  InducedModel model;
  model.vocabulary = make_vocabulary(tail, Provenance::Legal);
  return model;
}

// ---------------------------------------------------------------------------
// Unigram-likelihood induction (EM over segmentation lattices, loss pruning).
// ---------------------------------------------------------------------------

struct Lattice {
  std::vector<std::string> cps;
  std::int64_t count = 0;
};

struct UnigramTrainer {
  std::vector<std::string> toks;         // retained candidates
  std::vector<double> logp;
  std::vector<double> expected;
  std::unordered_map<std::string, int, SvHash, std::equal_to<>> tok_id;
  std::vector<Lattice> lattices;
  std::set<std::string> plain_singles;

  int find(std::string_view s) const {
    auto it = tok_id.find(s);
    return it == tok_id.end() ? -1 : it->second;
  }

  void rebuild_index() {
    tok_id.clear();
    for (size_t i = 0; i < toks.size(); ++i) tok_id.emplace(toks[i], static_cast<int>(i));
  }

  static double logsumexp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  // One E step; returns corpus log-likelihood (skipping unsegmentable words).
  double e_step() {
    std::fill(expected.begin(), expected.end(), 0.0);
    double ll = 0.0;
    for (const Lattice& lat : lattices) {
      const size_t n = lat.cps.size();
      // edge (i,j) carries token index tid[i][j-i-1]
      std::vector<std::vector<int>> tid(n);
      for (size_t i = 0; i < n; ++i) {
        std::string piece = i == 0 ? "" : "##";
        for (size_t j = i; j < std::min(n, i + kMaxPieceChars); ++j) {
          piece += lat.cps[j];
          tid[i].push_back(find(piece));
        }
      }
      std::vector<double> la(n + 1, kNegInf), lb(n + 1, kNegInf);
      la[0] = 0.0;
      for (size_t i = 0; i < n; ++i) {
        if (la[i] == kNegInf) continue;
        for (size_t k = 0; k < tid[i].size(); ++k) {
          const int t = tid[i][k];
          if (t < 0) continue;
          la[i + k + 1] = logsumexp(la[i + k + 1], la[i] + logp[t]);
        }
      }
      if (la[n] == kNegInf) continue;
      lb[n] = 0.0;
      for (size_t i = n; i-- > 0;) {
        for (size_t k = 0; k < tid[i].size(); ++k) {
          const int t = tid[i][k];
          if (t < 0 || lb[i + k + 1] == kNegInf) continue;
          lb[i] = logsumexp(lb[i], logp[t] + lb[i + k + 1]);
        }
      }
      const double z = la[n];
      for (size_t i = 0; i < n; ++i) {
        if (la[i] == kNegInf) continue;
        for (size_t k = 0; k < tid[i].size(); ++k) {
          const int t = tid[i][k];
          if (t < 0 || lb[i + k + 1] == kNegInf) continue;
          expected[t] +=
              static_cast<double>(lat.count) * std::exp(la[i] + logp[t] + lb[i + k + 1] - z);
        }
      }
      ll += static_cast<double>(lat.count) * z;
    }
    return ll;
  }

  void m_step() {
    double total = 0.0;
    for (double e : expected) total += e + 1e-8;
    for (size_t i = 0; i < toks.size(); ++i)
      logp[i] = std::log((expected[i] + 1e-8) / total);
  }

  void run_em(int iters) {
    for (int i = 0; i < iters; ++i) {
      e_step();
      m_step();
    }
  }

  // Best alternative segmentation of toks[self] using every other retained
  // token; -inf when none exists.
  double best_alternative(size_t self) const {
    const bool cont = toks[self].rfind("##", 0) == 0;
    const auto cps = utf8_chars(strip_cont(toks[self]));
    const size_t n = cps.size();
    std::vector<double> best(n + 1, kNegInf);
    best[0] = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (best[i] == kNegInf) continue;
      std::string piece = (cont || i > 0) ? "##" : "";
      for (size_t j = i; j < std::min(n, i + kMaxPieceChars); ++j) {
        piece += cps[j];
        const int t = find(piece);
        if (t < 0 || t == static_cast<int>(self)) continue;
        best[i + j - i + 1] = std::max(best[i + j - i + 1], best[i] + logp[t]);
      }
    }
    return best[n];
  }

  void remove_tokens(const std::set<std::string>& victims) {
    std::vector<std::string> nt;
    std::vector<double> np;
    for (size_t i = 0; i < toks.size(); ++i) {
      if (victims.count(toks[i])) continue;
      nt.push_back(toks[i]);
      np.push_back(logp[i]);
    }
    toks = std::move(nt);
    logp = std::move(np);
    expected.assign(toks.size(), 0.0);
    rebuild_index();
  }
};

InducedModel induce_unigram(const std::map<std::string, std::int64_t>& words,
                            std::int64_t target_size) {
  std::set<std::string> plain_singles;
  for (const auto& [word, count] : words)
    for (const std::string& c : utf8_chars(word)) plain_singles.insert(c);
  const std::int64_t min_feasible = 5 + static_cast<std::int64_t>(plain_singles.size());
  if (target_size < min_feasible)
    throw std::runtime_error("target_size too small; minimum feasible size is " +
                             std::to_string(min_feasible));

  // Seed candidates: substrings (≤ kMaxPieceChars chars) of the most
  // frequent words, position-aware.
  std::vector<std::pair<std::string, std::int64_t>> by_freq(words.begin(), words.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (by_freq.size() > kSeedWordCap) by_freq.resize(kSeedWordCap);

  std::map<std::string, double> cand_freq;
  for (const auto& [word, count] : by_freq) {
    const auto cps = utf8_chars(word);
    for (size_t i = 0; i < cps.size(); ++i) {
      std::string sub = i == 0 ? "" : "##";
      for (size_t j = i; j < std::min(cps.size(), i + kMaxPieceChars); ++j) {
        sub += cps[j];
        cand_freq[sub] += static_cast<double>(count);
      }
    }
  }
  for (const std::string& c : plain_singles)
    if (!cand_freq.count(c)) cand_freq[c] = 0.5;
  for (auto it = cand_freq.begin(); it != cand_freq.end();)
    it = is_special_string(it->first) ? cand_freq.erase(it) : std::next(it);

  const std::int64_t max_attainable = 5 + static_cast<std::int64_t>(cand_freq.size());
  if (target_size > max_attainable)
    throw std::runtime_error("target_size exceeds maximum attainable vocabulary size " +
                             std::to_string(max_attainable) + " for this corpus");

  UnigramTrainer tr;
  tr.plain_singles = plain_singles;
  double total = 0.0;
  for (const auto& [tok, f] : cand_freq) total += f;
  for (const auto& [tok, f] : cand_freq) {
    tr.toks.push_back(tok);
    tr.logp.push_back(std::log(std::max(f, 0.5) / total));
  }
  tr.expected.assign(tr.toks.size(), 0.0);
  tr.rebuild_index();
  for (const auto& [word, count] : words) {
    Lattice lat;
    lat.cps = utf8_chars(word);
    lat.count = count;
    tr.lattices.push_back(std::move(lat));
  }

  tr.run_em(4);
  while (5 + static_cast<std::int64_t>(tr.toks.size()) > target_size) {
    const std::int64_t excess = 5 + static_cast<std::int64_t>(tr.toks.size()) - target_size;
    const std::int64_t batch = std::max<std::int64_t>(1, excess / 5);
    tr.e_step();
    struct Loss {
      double loss;
      std::string tok;
    };
    std::vector<Loss> losses;
    for (size_t i = 0; i < tr.toks.size(); ++i) {
      if (tr.plain_singles.count(tr.toks[i])) continue;  // mandatory
      const double alt = tr.best_alternative(i);
      const double loss = alt == kNegInf
                              ? std::numeric_limits<double>::infinity()
                              : tr.expected[i] * (tr.logp[i] - alt);
      losses.push_back({loss, tr.toks[i]});
    }
    std::sort(losses.begin(), losses.end(), [](const Loss& a, const Loss& b) {
      if (a.loss != b.loss) return a.loss < b.loss;
      return a.tok < b.tok;
    });
    std::set<std::string> victims;
    for (const Loss& l : losses) {
      if (static_cast<std::int64_t>(victims.size()) >= batch) break;
      if (std::isinf(l.loss)) break;  // only encode-critical tokens left
      victims.insert(l.tok);
    }
    if (victims.empty()) {
      // Only encode-critical tokens remain: force-prune, least expected first.
      std::vector<std::pair<double, std::string>> singles;
      for (size_t i = 0; i < tr.toks.size(); ++i)
        if (!tr.plain_singles.count(tr.toks[i])) singles.emplace_back(tr.expected[i], tr.toks[i]);
      std::sort(singles.begin(), singles.end());
      for (const auto& [e, tok] : singles) {
        if (static_cast<std::int64_t>(victims.size()) >= excess) break;
        victims.insert(tok);
      }
      if (victims.empty())
        throw std::runtime_error("cannot prune vocabulary to target size");
    }
    tr.remove_tokens(victims);
    tr.run_em(2);
  }
  tr.run_em(2);

  // Final scores: renormalized expected counts.
  tr.e_step();
  double etotal = 0.0;
  for (double e : tr.expected) etotal += e + 1e-8;
  std::vector<double> score(tr.toks.size());
  for (size_t i = 0; i < tr.toks.size(); ++i)
    score[i] = std::log((tr.expected[i] + 1e-8) / etotal);

  std::vector<std::string> tail(plain_singles.begin(), plain_singles.end());
  std::vector<std::pair<std::string, double>> rest;
  for (size_t i = 0; i < tr.toks.size(); ++i)
    if (!plain_singles.count(tr.toks[i])) rest.emplace_back(tr.toks[i], score[i]);
  std::sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [tok, s] : rest) tail.push_back(tok);

  InducedModel model;
  model.vocabulary = make_vocabulary(tail, Provenance::Legal);
  for (size_t i = 0; i < tr.toks.size(); ++i) model.scores[tr.toks[i]] = score[i];
  return model;
}

}  // namespace

const std::array<std::string, 5>& special_tokens() {
  static const std::array<std::string, 5> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                       "[MASK]"};
  return kSpecials;
}

Vocabulary make_vocabulary(const std::vector<std::string>& non_special_tokens,
                           Provenance provenance) {
  Vocabulary v;
  v.provenance = provenance;
  for (const auto& sp : special_tokens()) v.tokens.push_back(sp);
  for (const auto& t : non_special_tokens) {
    if (t.empty()) throw std::runtime_error("empty token string");
    if (is_special_string(t)) throw std::runtime_error("non-special token equals special: " + t);
    v.tokens.push_back(t);
  }
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    if (!v.token_to_id.emplace(v.tokens[i], static_cast<std::int32_t>(i)).second)
      throw std::runtime_error("duplicate token: " + v.tokens[i]);
  }
  return v;
}

std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    len = std::min(len, s.size() - i);
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> whitespace_words(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

InducedModel induce_vocabulary(const std::vector<Snippet>& corpus, std::int64_t target_size,
                               InduceMode mode) {
  const auto words = collect_words(corpus);
  return mode == InduceMode::Bpe ? induce_bpe(words, target_size)
                                 : induce_unigram(words, target_size);
}

std::vector<std::int32_t> encode(const Vocabulary& vocab, const std::string& text) {
  std::vector<std::int32_t> ids;
  for (const std::string& word : whitespace_words(text)) {
    if (utf8_chars(word).size() > kMaxWordChars) {
      ids.push_back(Vocabulary::kUnk);
      continue;
    }
    std::vector<std::int32_t> piece_ids;
    size_t pos = 0;
    bool failed = false;
    while (pos < word.size()) {
      std::int32_t match = -1;
      size_t match_end = pos;
      // Longest-match-first over byte prefixes; token strings are valid
      // UTF-8, so matches always land on character boundaries.
      const std::string prefix = pos == 0 ? "" : "##";
      for (size_t end = word.size(); end > pos; --end) {
        const std::int32_t id = vocab.id(prefix + word.substr(pos, end - pos));
        if (id >= 0) {
          match = id;
          match_end = end;
          break;
        }
      }
      if (match < 0) {
        failed = true;
        break;
      }
      piece_ids.push_back(match);
      pos = match_end;
    }
    if (failed)
      ids.push_back(Vocabulary::kUnk);
    else
      ids.insert(ids.end(), piece_ids.begin(), piece_ids.end());
  }
  return ids;
}

std::string decode(const Vocabulary& vocab, const std::vector<std::int32_t>& ids) {
  std::string out;
  for (std::int32_t id : ids) {
    if (id < 0 || id >= static_cast<std::int32_t>(vocab.tokens.size()))
      throw std::runtime_error("token id out of range: " + std::to_string(id));
    if (id < Vocabulary::kNumSpecials) continue;
    const std::string& tok = vocab.tokens[static_cast<size_t>(id)];
    if (tok.rfind("##", 0) == 0 && !out.empty() && out.back() != ' ') {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += strip_cont(tok);
    }
  }
  return out;
}

Vocabulary merge_hybrid(const Vocabulary& base, const std::map<std::string, std::int64_t>& corpus_freq,
                        std::int64_t k, std::vector<std::string>* warnings) {
  if (k < 0) throw std::runtime_error("K must be >= 0");
  std::vector<std::pair<std::string, std::int64_t>> by_freq(corpus_freq.begin(),
                                                            corpus_freq.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> added;
  for (const auto& [word, count] : by_freq) {
    if (static_cast<std::int64_t>(added.size()) >= k) break;
    if (word.empty() || word.rfind("##", 0) == 0 || is_special_string(word)) continue;
    if (utf8_chars(word).size() > kMaxWordChars) continue;  // would still encode to [UNK]
    bool has_space = false;
    for (char c : word) has_space |= is_space(c);
    if (has_space) continue;
    const auto enc = encode(base, word);
    if (enc.size() == 1 && enc[0] != Vocabulary::kUnk) continue;  // already one token
    added.push_back(word);
  }
  if (static_cast<std::int64_t>(added.size()) < k && warnings)
    warnings->push_back("only " + std::to_string(added.size()) + " of " + std::to_string(k) +
                        " requested hybrid tokens were eligible");
  std::vector<std::string> tail(base.tokens.begin() + Vocabulary::kNumSpecials,
                                base.tokens.end());
  tail.insert(tail.end(), added.begin(), added.end());
  return make_vocabulary(tail, Provenance::Hybrid);
}

double vocab_overlap(const Vocabulary& v1, const Vocabulary& v2) {
  const Vocabulary& small = v1.size() <= v2.size() ? v1 : v2;
  const Vocabulary& large = v1.size() <= v2.size() ? v2 : v1;
  std::int64_t common = 0;
  for (size_t i = Vocabulary::kNumSpecials; i < small.tokens.size(); ++i)
    if (large.has(small.tokens[i]) &&
        large.id(small.tokens[i]) >= Vocabulary::kNumSpecials)
      ++common;
  const std::int64_t denom = small.size() - Vocabulary::kNumSpecials;
  if (denom <= 0) return 0.0;
  return static_cast<double>(common) / static_cast<double>(denom);
}

void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::string out;
  for (const std::string& t : vocab.tokens) {
    out += t;
    out += '\n';
  }
  io::write_file(path, out);
}

Vocabulary load_vocabulary(const std::string& path, Provenance provenance) {
  const std::string content = io::read_file(path);
  if (!io::valid_utf8(content)) throw std::runtime_error("not valid UTF-8: " + path);
  const auto lines = io::split_lines(content);
  if (lines.size() < 5) throw std::runtime_error("vocabulary file too short: " + path);
  for (size_t i = 0; i < 5; ++i)
    if (lines[i] != special_tokens()[i])
      throw std::runtime_error("vocabulary file missing special tokens: " + path);
  for (size_t i = 5; i < lines.size(); ++i)
    if (lines[i].empty()) throw std::runtime_error("empty token line in " + path);
  return make_vocabulary({lines.begin() + 5, lines.end()}, provenance);
}

void save_frequencies(const std::string& path, const std::map<std::string, std::int64_t>& freq) {
  std::vector<std::pair<std::string, std::int64_t>> rows(freq.begin(), freq.end());
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::string out;
  for (const auto& [word, count] : rows) {
    out += word;
    out += '\t';
    out += std::to_string(count);
    out += '\n';
  }
  io::write_file(path, out);
}

std::map<std::string, std::int64_t> load_frequencies(const std::string& path) {
  std::map<std::string, std::int64_t> freq;
  for (const std::string& line : io::split_lines(io::read_file(path))) {
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("malformed frequency line in " + path + ": " + line);
    freq[line.substr(0, tab)] = std::stoll(line.substr(tab + 1));
  }
  return freq;
}

CorpusStats sentence_length_report(const std::vector<Snippet>& snippets, const Vocabulary& vocab) {
  return sentence_length_report(snippets, [&vocab](const std::string& text) {
    return static_cast<std::int64_t>(encode(vocab, text).size());
  });
}

}  // namespace lexkit
