#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "lowres_mt/phrase_table.hpp"

namespace lowres_mt {

struct TriangulationConfig {
  std::size_t k = 20;  // translations kept per source phrase
};

/// Composes source->pivot and pivot->target tables, marginalizing over
/// shared pivot phrases e:
///   phi(t|s) = sum_e phi(t|e) phi(e|s),   phi(s|t) = sum_e phi(s|e) phi(e|t)
/// and likewise for both lexical weights. All four features are computed on
/// the full join; then each source keeps its k best targets by phi(t|s)
/// (ties: lexicographically smaller target first). Per (s,t), terms are
/// summed in increasing order of e so results do not depend on input order.
inline PhraseTable triangulate(const PhraseTable& pt_se, const PhraseTable& pt_et, const TriangulationConfig& cfg) {
  if (cfg.k < 1) throw Error("triangulate: k must be >= 1");
  if (!pt_se.tgt_lang.empty() && !pt_et.src_lang.empty() && pt_se.tgt_lang != pt_et.src_lang)
    throw Error("triangulate: pivot mismatch (" + pt_se.tgt_lang + " vs " + pt_et.src_lang + ")");

  std::map<std::string, std::vector<const PhraseTableEntry*>> by_pivot;
  for (const auto& e : pt_et.entries) by_pivot[e.src].push_back(&e);
  std::map<std::string, std::vector<const PhraseTableEntry*>> by_source;
  for (const auto& e : pt_se.entries) by_source[e.src].push_back(&e);

  PhraseTable out{pt_se.src_lang, pt_et.tgt_lang, {}};
  for (auto& [src, firsts] : by_source) {
    std::sort(firsts.begin(), firsts.end(), [](auto* a, auto* b) { return a->tgt < b->tgt; });
    std::map<std::string, PhraseTableEntry> acc;
    for (const auto* se : firsts) {
      auto it = by_pivot.find(se->tgt);
      if (it == by_pivot.end()) continue;
      for (const auto* et : it->second) {
        auto [slot, fresh] = acc.try_emplace(et->tgt, PhraseTableEntry{src, et->tgt, 0, 0, 0, 0});
        auto& e = slot->second;
        e.phi_fwd += et->phi_fwd * se->phi_fwd;
        e.lex_fwd += et->lex_fwd * se->lex_fwd;
        e.phi_bwd += se->phi_bwd * et->phi_bwd;
        e.lex_bwd += se->lex_bwd * et->lex_bwd;
      }
    }
    std::vector<PhraseTableEntry> cands;
    for (auto& [t, e] : acc) cands.push_back(std::move(e));
    std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.phi_fwd > b.phi_fwd; });
    if (cands.size() > cfg.k) cands.resize(cfg.k);
    out.entries.insert(out.entries.end(), cands.begin(), cands.end());
  }
  out.sort();
  return out;
}

}  // namespace lowres_mt
