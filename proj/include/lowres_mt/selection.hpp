#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lowres_mt/ngram.hpp"

namespace lowres_mt {

struct SelectionConfig {
  std::size_t t = 1;  // number of sentences to keep
  const NGramModel* in_domain_lm = nullptr;
  const NGramModel* general_lm = nullptr;
};

struct ScoredSentence {
  Sentence sentence;
  double score = 0.0;        // H_in - H_gen, nats per token
  std::size_t index = 0;     // position in the input pool
};

/// Cross-entropy difference selection. Sentences with an in-domain OOV are
/// dropped; the rest are ranked by ascending H_in - H_gen (stable on ties)
/// and the first T are returned.
inline std::vector<ScoredSentence> moore_lewis_select(const SelectionConfig& cfg, const MonolingualCorpus& mono) {
  if (cfg.t < 1) throw Error("moore_lewis_select: T must be >= 1");
  if (!cfg.in_domain_lm || !cfg.general_lm) throw Error("moore_lewis_select: both language models are required");
  std::vector<ScoredSentence> pool;
  for (std::size_t i = 0; i < mono.sentences.size(); ++i) {
    const auto& s = mono.sentences[i];
    if (s.empty() || cfg.in_domain_lm->has_oov(s)) continue;
    const double score = cfg.in_domain_lm->cross_entropy(s) - cfg.general_lm->cross_entropy(s);
    if (!std::isfinite(score)) continue;
    pool.push_back({s, score, i});
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [](const ScoredSentence& a, const ScoredSentence& b) { return a.score < b.score; });
  if (pool.size() > cfg.t) pool.resize(cfg.t);
  return pool;
}

/// Keeps pairs that have at least one OOV token on both sides.
inline ParallelCorpus filter_oov_pairs(const ParallelCorpus& corpus, const NGramModel& src_lm,
                                       const NGramModel& tgt_lm) {
  ParallelCorpus out{corpus.src_lang, corpus.tgt_lang, {}};
  for (const auto& p : corpus.pairs)
    if (src_lm.has_oov(p.first) && tgt_lm.has_oov(p.second)) out.pairs.push_back(p);
  return out;
}

}  // namespace lowres_mt
