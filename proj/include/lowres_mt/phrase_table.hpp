#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lowres_mt/alignment.hpp"

namespace lowres_mt {

/// Half-open token spans [s_begin, s_end) x [t_begin, t_end).
struct SpanPair {
  std::size_t s_begin, s_end, t_begin, t_end;

  auto operator<=>(const SpanPair&) const = default;
};

/// All phrase pairs consistent with the alignment: at least one link inside
/// the box and no link with exactly one end inside. Unaligned target words
/// at the box edges yield the extended variants.
inline std::set<SpanPair> extract_phrase_pairs(const SentencePair& pair, const Alignment& alignment,
                                               std::size_t max_phrase_len = 7) {
  if (max_phrase_len < 1) throw Error("extract_phrase_pairs: max_phrase_len must be >= 1");
  const std::size_t n = pair.first.size(), m = pair.second.size();
  std::vector<char> tgt_aligned(m, 0);
  for (const auto& [i, j] : alignment.links) {
    if (i >= n || j >= m) throw Error("alignment link out of sentence bounds");
    tgt_aligned[j] = 1;
  }
  std::set<SpanPair> out;
  for (std::size_t s1 = 0; s1 < n; ++s1) {
    for (std::size_t s2 = s1; s2 < n && s2 - s1 < max_phrase_len; ++s2) {
      std::size_t tmin = m, tmax = 0;
      bool any = false;
      for (const auto& [i, j] : alignment.links)
        if (i >= s1 && i <= s2) {
          tmin = std::min(tmin, j);
          tmax = std::max(tmax, j);
          any = true;
        }
      if (!any || tmax - tmin >= max_phrase_len) continue;
      bool consistent = true;
      for (const auto& [i, j] : alignment.links)
        if (j >= tmin && j <= tmax && (i < s1 || i > s2)) consistent = false;
      if (!consistent) continue;
      for (long ts = static_cast<long>(tmin);;) {
        for (std::size_t te = tmax;;) {
          if (te - static_cast<std::size_t>(ts) < max_phrase_len)
            out.insert({s1, s2 + 1, static_cast<std::size_t>(ts), te + 1});
          ++te;
          if (te >= m || tgt_aligned[te]) break;
        }
        --ts;
        if (ts < 0 || tgt_aligned[static_cast<std::size_t>(ts)]) break;
      }
    }
  }
  return out;
}

struct PhraseTableEntry {
  std::string src;
  std::string tgt;
  double phi_fwd = 1.0;  // phi(t|s)
  double lex_fwd = 1.0;  // phi_lex(t|s)
  double phi_bwd = 1.0;  // phi(s|t)
  double lex_bwd = 1.0;  // phi_lex(s|t)

  bool operator==(const PhraseTableEntry&) const = default;
};

inline bool entry_order(const PhraseTableEntry& a, const PhraseTableEntry& b) {
  if (a.src != b.src) return a.src < b.src;
  if (a.phi_fwd != b.phi_fwd) return a.phi_fwd > b.phi_fwd;
  return a.tgt < b.tgt;
}

struct PhraseTable {
  std::string src_lang;
  std::string tgt_lang;
  std::vector<PhraseTableEntry> entries;

  void sort() { std::sort(entries.begin(), entries.end(), entry_order); }
  std::size_t size() const { return entries.size(); }
};

inline std::string span_text(const Sentence& s, std::size_t b, std::size_t e) {
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (i > b) out += ' ';
    out += s[i];
  }
  return out;
}

/// Lexical weight phi_lex(t|s) of one phrase pair occurrence:
/// product over target words of the mean t(t_j|s_i) over aligned s_i, or
/// t(t_j|NULL) for unaligned target words.
inline double lexical_weight(const Sentence& src, const Sentence& tgt, const std::set<Link>& links,
                             const LexicalTable& t_given_s) {
  constexpr double kFloor = 1e-10;
  double w = 1.0;
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    double sum = 0.0;
    std::size_t k = 0;
    for (const auto& [i, jj] : links)
      if (jj == j) {
        sum += t_given_s.prob(tgt[j], src[i]);
        ++k;
      }
    const double p = k ? sum / static_cast<double>(k) : t_given_s.prob(tgt[j], kNullWord);
    w *= std::max(p, kFloor);
  }
  return std::min(w, 1.0);
}

/// Relative-frequency phrase table. lex_fwd is t(target|source), lex_bwd is
/// t(source|target). When a pair is seen with several internal alignments,
/// each lexical feature keeps its maximum.
inline PhraseTable build_phrase_table(const ParallelCorpus& corpus, const std::vector<Alignment>& alignments,
                                      const LexicalTable& lex_fwd, const LexicalTable& lex_bwd,
                                      std::size_t max_phrase_len = 7) {
  if (alignments.size() != corpus.size())
    throw Error("build_phrase_table: " + std::to_string(corpus.size()) + " sentence pairs but " +
                std::to_string(alignments.size()) + " alignments");
  struct Acc {
    double count = 0, lex_fwd = 0, lex_bwd = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  std::unordered_map<std::string, double> src_count, tgt_count;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& [src, tgt] = corpus.pairs[k];
    for (const auto& sp : extract_phrase_pairs(corpus.pairs[k], alignments[k], max_phrase_len)) {
      Sentence s(src.begin() + static_cast<std::ptrdiff_t>(sp.s_begin), src.begin() + static_cast<std::ptrdiff_t>(sp.s_end));
      Sentence t(tgt.begin() + static_cast<std::ptrdiff_t>(sp.t_begin), tgt.begin() + static_cast<std::ptrdiff_t>(sp.t_end));
      std::set<Link> inner, inner_rev;
      for (const auto& [i, j] : alignments[k].links)
        if (i >= sp.s_begin && i < sp.s_end && j >= sp.t_begin && j < sp.t_end) {
          inner.insert({i - sp.s_begin, j - sp.t_begin});
          inner_rev.insert({j - sp.t_begin, i - sp.s_begin});
        }
      auto& a = acc[{join_tokens(s), join_tokens(t)}];
      a.count += 1;
      a.lex_fwd = std::max(a.lex_fwd, lexical_weight(s, t, inner, lex_fwd));
      a.lex_bwd = std::max(a.lex_bwd, lexical_weight(t, s, inner_rev, lex_bwd));
      src_count[join_tokens(s)] += 1;
      tgt_count[join_tokens(t)] += 1;
    }
  }
  PhraseTable pt{corpus.src_lang, corpus.tgt_lang, {}};
  for (const auto& [key, a] : acc)
    pt.entries.push_back({key.first, key.second, a.count / src_count[key.first], a.lex_fwd,
                          a.count / tgt_count[key.second], a.lex_bwd});
  pt.sort();
  return pt;
}

// `src ||| tgt ||| phi_fwd lex_fwd phi_bwd lex_bwd`, 6 significant digits,
// sorted by (src, -phi_fwd, tgt).
inline std::string format_phrase_table(const PhraseTable& table) {
  PhraseTable sorted = table;
  sorted.sort();
  std::string out;
  for (const auto& e : sorted.entries) {
    out += e.src + " ||| " + e.tgt + " ||| " + format_double(e.phi_fwd) + " " + format_double(e.lex_fwd) + " " +
           format_double(e.phi_bwd) + " " + format_double(e.lex_bwd) + "\n";
  }
  return out;
}

inline void save_phrase_table(const PhraseTable& table, const Path& path) { write_file(path, format_phrase_table(table)); }

inline PhraseTable load_phrase_table(const Path& path, std::string src_lang = {}, std::string tgt_lang = {}) {
  PhraseTable pt{std::move(src_lang), std::move(tgt_lang), {}};
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const auto a = line.find(" ||| ");
    const auto b = a == std::string::npos ? a : line.find(" ||| ", a + 5);
    if (b == std::string::npos) throw Error(path.string() + ":" + std::to_string(lineno) + ": malformed phrase-table line");
    const auto feats = split_tokens(line.substr(b + 5));
    if (feats.size() != 4) throw Error(path.string() + ":" + std::to_string(lineno) + ": expected 4 features");
    PhraseTableEntry e{line.substr(0, a), line.substr(a + 5, b - a - 5), std::stod(feats[0]), std::stod(feats[1]),
                       std::stod(feats[2]), std::stod(feats[3])};
    pt.entries.push_back(std::move(e));
  }
  return pt;
}

// ---- significance pruning ------------------------------------------------

/// Sentence-level co-occurrence counts for phrase-table entries.
struct CooccurrenceStats {
  std::size_t n = 0;  // number of sentence pairs
  std::unordered_map<std::string, std::size_t> src;
  std::unordered_map<std::string, std::size_t> tgt;
  std::map<std::pair<std::string, std::string>, std::size_t> joint;
};

inline std::unordered_set<std::string> sentence_ngrams(const Sentence& s, std::size_t max_len,
                                                       const std::unordered_set<std::string>& keep) {
  std::unordered_set<std::string> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j <= s.size() && j - i <= max_len; ++j) {
      auto g = span_text(s, i, j);
      if (keep.count(g)) out.insert(std::move(g));
    }
  return out;
}

inline CooccurrenceStats cooccurrence_stats(const ParallelCorpus& corpus, const PhraseTable& table) {
  std::unordered_set<std::string> srcs, tgts;
  std::unordered_map<std::string, std::vector<std::string>> by_src;
  std::size_t max_len = 1;
  for (const auto& e : table.entries) {
    srcs.insert(e.src);
    tgts.insert(e.tgt);
    by_src[e.src].push_back(e.tgt);
    max_len = std::max({max_len, split_tokens(e.src).size(), split_tokens(e.tgt).size()});
  }
  CooccurrenceStats st;
  st.n = corpus.size();
  for (const auto& [s, t] : corpus.pairs) {
    const auto sg = sentence_ngrams(s, max_len, srcs);
    const auto tg = sentence_ngrams(t, max_len, tgts);
    for (const auto& g : sg) ++st.src[g];
    for (const auto& g : tg) ++st.tgt[g];
    for (const auto& g : sg)
      for (const auto& t2 : by_src[g])
        if (tg.count(t2)) ++st.joint[{g, t2}];
  }
  return st;
}

inline double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

/// -ln p of the one-sided Fisher exact test P(X >= joint) where X is
/// hypergeometric with population n, c_src successes and c_tgt draws.
inline double fisher_neg_log_p(std::size_t joint, std::size_t c_src, std::size_t c_tgt, std::size_t n) {
  if (joint > c_src || joint > c_tgt || c_src > n || c_tgt > n || c_src + c_tgt > n + joint)
    throw Error("fisher test: inconsistent contingency counts");
  const double N = static_cast<double>(n), K = static_cast<double>(c_src), D = static_cast<double>(c_tgt);
  const std::size_t hi = std::min(c_src, c_tgt);
  const double denom = log_choose(N, D);
  std::vector<double> logs;
  for (std::size_t k = joint; k <= hi; ++k) {
    const double kk = static_cast<double>(k);
    if (D - kk > N - K) continue;
    logs.push_back(log_choose(K, kk) + log_choose(N - K, D - kk) - denom);
  }
  const double mx = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - mx);
  return -(mx + std::log(sum));
}

inline double fisher_p_value(std::size_t joint, std::size_t c_src, std::size_t c_tgt, std::size_t n) {
  return std::exp(-fisher_neg_log_p(joint, c_src, c_tgt, n));
}

/// Pruning threshold on -ln p. alpha_plus_epsilon sits just above the
/// significance of a pair whose source, target and joint counts are all 1.
struct PruneThreshold {
  enum class Kind { alpha_plus_epsilon, alpha_minus_epsilon, explicit_value } kind = Kind::alpha_plus_epsilon;
  double value = 0.0;  // used for explicit_value

  static constexpr double kEpsilon = 1e-6;

  double neg_log_p(std::size_t n) const {
    const double alpha = fisher_neg_log_p(1, 1, 1, n);
    switch (kind) {
      case Kind::alpha_plus_epsilon: return alpha + kEpsilon;
      case Kind::alpha_minus_epsilon: return alpha - kEpsilon;
      default: return value;
    }
  }
};

/// Keeps entries whose -ln p exceeds the threshold.
inline PhraseTable significance_prune(const PhraseTable& table, const CooccurrenceStats& stats,
                                      PruneThreshold threshold = {}) {
  if (stats.n == 0) throw Error("significance_prune: statistics cover no sentence pairs");
  const double cut = threshold.neg_log_p(stats.n);
  PhraseTable out{table.src_lang, table.tgt_lang, {}};
  for (const auto& e : table.entries) {
    auto js = stats.joint.find({e.src, e.tgt});
    auto ss = stats.src.find(e.src);
    auto ts = stats.tgt.find(e.tgt);
    if (js == stats.joint.end() || ss == stats.src.end() || ts == stats.tgt.end())
      throw Error("significance_prune: no statistics for entry '" + e.src + " ||| " + e.tgt + "'");
    if (fisher_neg_log_p(js->second, ss->second, ts->second, stats.n) > cut) out.entries.push_back(e);
  }
  return out;
}

}  // namespace lowres_mt
