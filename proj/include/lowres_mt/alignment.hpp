#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lowres_mt/corpus.hpp"

namespace lowres_mt {

inline constexpr const char* kNullWord = "NULL";

/// Conditional word translation probabilities t(out | cond). The
/// conditioning side includes the NULL word.
struct LexicalTable {
  std::unordered_map<std::string, std::unordered_map<std::string, double>> table;

  double prob(const std::string& out, const std::string& cond) const {
    auto it = table.find(cond);
    if (it == table.end()) return 0.0;
    auto jt = it->second.find(out);
    return jt == it->second.end() ? 0.0 : jt->second;
  }
};

namespace detail {

struct IdCorpus {
  std::vector<std::string> cond_words{kNullWord};  // id 0 is NULL
  std::vector<std::string> out_words;
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
};

inline IdCorpus index_corpus(const ParallelCorpus& corpus) {
  IdCorpus ic;
  std::map<std::string, int> cond{{kNullWord, 0}}, out;
  for (const auto& [s, t] : corpus.pairs) {
    std::vector<int> si, ti;
    for (const auto& w : s) {
      auto [it, fresh] = cond.emplace(w, static_cast<int>(ic.cond_words.size()));
      if (fresh) ic.cond_words.push_back(w);
      si.push_back(it->second);
    }
    for (const auto& w : t) {
      auto [it, fresh] = out.emplace(w, static_cast<int>(ic.out_words.size()));
      if (fresh) ic.out_words.push_back(w);
      ti.push_back(it->second);
    }
    ic.pairs.emplace_back(std::move(si), std::move(ti));
  }
  return ic;
}

struct PairKeyHash {
  std::size_t operator()(std::uint64_t k) const { return std::hash<std::uint64_t>()(k * 0x9e3779b97f4a7c15ULL); }
};

inline std::uint64_t pair_key(int cond, int out) {
  return (static_cast<std::uint64_t>(cond) << 32) | static_cast<std::uint32_t>(out);
}

}  // namespace detail

/// IBM Model 1 EM for t(target | source), with a NULL source word.
/// iterations == 0 yields t uniform over the co-occurring target words.
inline LexicalTable train_ibm1(const ParallelCorpus& corpus, std::size_t iterations,
                               std::vector<double>* log_likelihoods = nullptr) {
  if (corpus.empty()) throw Error("train_ibm1: empty corpus");
  const auto ic = detail::index_corpus(corpus);
  std::unordered_map<std::uint64_t, double, detail::PairKeyHash> t;
  {
    std::vector<std::set<int>> cooc(ic.cond_words.size());
    for (const auto& [s, f] : ic.pairs) {
      for (int fj : f) {
        cooc[0].insert(fj);
        for (int ei : s) cooc[ei].insert(fj);
      }
    }
    for (std::size_t e = 0; e < cooc.size(); ++e)
      for (int f : cooc[e]) t[detail::pair_key(static_cast<int>(e), f)] = 1.0 / static_cast<double>(cooc[e].size());
  }
  auto loglik = [&] {
    double ll = 0.0;
    for (const auto& [s, f] : ic.pairs)
      for (int fj : f) {
        double z = t[detail::pair_key(0, fj)];
        for (int ei : s) z += t[detail::pair_key(ei, fj)];
        ll += std::log(z / static_cast<double>(s.size() + 1));
      }
    return ll;
  };
  if (log_likelihoods) log_likelihoods->push_back(loglik());
  for (std::size_t it = 0; it < iterations; ++it) {
    std::unordered_map<std::uint64_t, double, detail::PairKeyHash> counts;
    std::vector<double> totals(ic.cond_words.size(), 0.0);
    for (const auto& [s, f] : ic.pairs) {
      for (int fj : f) {
        double z = t[detail::pair_key(0, fj)];
        for (int ei : s) z += t[detail::pair_key(ei, fj)];
        auto credit = [&](int ei) {
          const double c = t[detail::pair_key(ei, fj)] / z;
          counts[detail::pair_key(ei, fj)] += c;
          totals[ei] += c;
        };
        credit(0);
        for (int ei : s) credit(ei);
      }
    }
    for (auto& [k, v] : t) v = counts[k] / totals[static_cast<std::size_t>(k >> 32)];
    if (log_likelihoods) log_likelihoods->push_back(loglik());
  }
  LexicalTable out;
  for (const auto& [k, v] : t)
    out.table[ic.cond_words[k >> 32]][ic.out_words[k & 0xffffffffULL]] = v;
  return out;
}

using Link = std::pair<std::size_t, std::size_t>;  // (source index, target index)

struct Alignment {
  std::set<Link> links;

  bool operator==(const Alignment&) const = default;
};

/// For every target word the best source word under t(target | source), or
/// unaligned when NULL scores strictly higher.
inline Alignment directed_alignment(const LexicalTable& t_given_s, const Sentence& src, const Sentence& tgt) {
  Alignment a;
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double p = t_given_s.prob(tgt[j], src[i]);
      if (p > best) {
        best = p;
        best_i = i;
      }
    }
    if (best > 0.0 && best >= t_given_s.prob(tgt[j], kNullWord)) a.links.insert({best_i, j});
  }
  return a;
}

/// grow-diag-final symmetrization of two directed alignments.
inline Alignment grow_diag_final(std::size_t src_len, std::size_t tgt_len, const Alignment& fwd, const Alignment& bwd) {
  std::vector<std::vector<char>> in(src_len, std::vector<char>(tgt_len, 0));
  std::vector<char> src_aligned(src_len, 0), tgt_aligned(tgt_len, 0);
  std::set<Link> uni = fwd.links;
  uni.insert(bwd.links.begin(), bwd.links.end());
  auto add = [&](std::size_t i, std::size_t j) {
    in[i][j] = 1;
    src_aligned[i] = 1;
    tgt_aligned[j] = 1;
  };
  for (const auto& l : fwd.links)
    if (bwd.links.count(l)) add(l.first, l.second);

  static constexpr int kNeighbors[8][2] = {{-1, 0}, {0, -1}, {1, 0}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  for (bool added = true; added;) {
    added = false;
    for (std::size_t i = 0; i < src_len; ++i)
      for (std::size_t j = 0; j < tgt_len; ++j) {
        if (!in[i][j]) continue;
        for (const auto& d : kNeighbors) {
          const long ni = static_cast<long>(i) + d[0], nj = static_cast<long>(j) + d[1];
          if (ni < 0 || nj < 0 || ni >= static_cast<long>(src_len) || nj >= static_cast<long>(tgt_len)) continue;
          const auto ui = static_cast<std::size_t>(ni), uj = static_cast<std::size_t>(nj);
          if (in[ui][uj]) continue;
          if ((!src_aligned[ui] || !tgt_aligned[uj]) && uni.count({ui, uj})) {
            add(ui, uj);
            added = true;
          }
        }
      }
  }
  for (const auto* directed : {&fwd, &bwd})
    for (std::size_t i = 0; i < src_len; ++i)
      for (std::size_t j = 0; j < tgt_len; ++j)
        if ((!src_aligned[i] || !tgt_aligned[j]) && directed->links.count({i, j})) add(i, j);

  Alignment out;
  for (std::size_t i = 0; i < src_len; ++i)
    for (std::size_t j = 0; j < tgt_len; ++j)
      if (in[i][j]) out.links.insert({i, j});
  return out;
}

/// table_fwd = t(target | source), table_bwd = t(source | target).
inline Alignment align_pair(const LexicalTable& table_fwd, const LexicalTable& table_bwd, const SentencePair& pair) {
  const auto& [src, tgt] = pair;
  const Alignment fwd = directed_alignment(table_fwd, src, tgt);
  Alignment bwd;
  for (const auto& [j, i] : directed_alignment(table_bwd, tgt, src).links) bwd.links.insert({i, j});
  return grow_diag_final(src.size(), tgt.size(), fwd, bwd);
}

inline std::string format_alignment(const Alignment& a) {
  std::string out;
  for (const auto& [i, j] : a.links) {
    if (!out.empty()) out += ' ';
    out += std::to_string(i) + "-" + std::to_string(j);
  }
  return out;
}

inline Alignment parse_alignment(std::string_view line) {
  Alignment a;
  for (const auto& tok : split_tokens(line)) {
    const auto dash = tok.find('-');
    if (dash == std::string::npos) throw Error("malformed alignment link '" + tok + "'");
    a.links.insert({std::stoul(tok.substr(0, dash)), std::stoul(tok.substr(dash + 1))});
  }
  return a;
}

}  // namespace lowres_mt
