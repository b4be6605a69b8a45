#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lowres_mt/ngram.hpp"
#include "lowres_mt/phrase_table.hpp"

namespace lowres_mt {

struct PbsmtWeights {
  double phi_fwd = 1.0;
  double lex_fwd = 1.0;
  double phi_bwd = 1.0;
  double lex_bwd = 1.0;
  double lm = 1.0;
  double length = 1.0;
};

struct PbsmtOptions {
  std::size_t beam = 100;           // hypotheses per stack; SIZE_MAX for exact search
  std::size_t max_phrase_len = 7;
  std::size_t table_limit = 0;      // options per source span, 0 = unlimited
};

struct TranslationOption {
  Sentence target;
  double feature_score = 0.0;  // weighted log features + length term
};

/// Source phrase -> target entries, merged over several tables. On duplicate
/// (src, tgt) the entry with the higher phi(t|s) wins.
class PhraseIndex {
 public:
  explicit PhraseIndex(const std::vector<const PhraseTable*>& tables) {
    for (const auto* t : tables)
      for (const auto& e : t->entries) {
        auto& slot = index_[e.src][e.tgt];
        if (!slot || e.phi_fwd > slot->phi_fwd) slot = &e;
      }
  }

  const std::map<std::string, const PhraseTableEntry*>* find(const std::string& src) const {
    auto it = index_.find(src);
    return it == index_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<std::string, std::map<std::string, const PhraseTableEntry*>> index_;
};

inline double option_score(const PhraseTableEntry& e, std::size_t target_len, const PbsmtWeights& w) {
  return w.phi_fwd * std::log(e.phi_fwd) + w.lex_fwd * std::log(e.lex_fwd) + w.phi_bwd * std::log(e.phi_bwd) +
         w.lex_bwd * std::log(e.lex_bwd) + w.length * static_cast<double>(target_len);
}

/// options[i][len-1] = translation options for source span [i, i+len).
/// A single-token span with no entry gets a copy-through option.
inline std::vector<std::vector<std::vector<TranslationOption>>> collect_options(const PhraseIndex& index,
                                                                                const Sentence& src,
                                                                                const PbsmtWeights& w,
                                                                                const PbsmtOptions& opt) {
  std::vector<std::vector<std::vector<TranslationOption>>> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t len = 1; len <= opt.max_phrase_len && i + len <= src.size(); ++len) {
      std::vector<TranslationOption> opts;
      if (const auto* entries = index.find(span_text(src, i, i + len))) {
        for (const auto& [tgt, e] : *entries) {
          auto t = split_tokens(tgt);
          const double sc = option_score(*e, t.size(), w);
          opts.push_back({std::move(t), sc});
        }
        std::stable_sort(opts.begin(), opts.end(),
                         [](const auto& a, const auto& b) { return a.feature_score > b.feature_score; });
        if (opt.table_limit && opts.size() > opt.table_limit) opts.resize(opt.table_limit);
      }
      if (opts.empty() && len == 1) opts.push_back({{src[i]}, w.length});
      out[i].push_back(std::move(opts));
    }
  }
  return out;
}

struct PbsmtResult {
  Sentence output;
  double score = -std::numeric_limits<double>::infinity();
};

/// Left-to-right monotone stack decoding with LM-state recombination.
inline PbsmtResult decode_monotone_scored(const PhraseIndex& index, const NGramModel& lm, const PbsmtWeights& w,
                                          const Sentence& src, const PbsmtOptions& opt = {}) {
  if (opt.beam < 1) throw Error("decode_monotone: beam must be >= 1");
  if (src.empty()) return {{}, 0.0};
  const auto options = collect_options(index, src, w, opt);
  struct Hyp {
    double score;
    std::vector<WordId> history;  // last order-1 ids, starting from <s>
    Sentence output;
  };
  const std::size_t keep = static_cast<std::size_t>(std::max(1, lm.order() - 1));
  std::vector<std::map<std::vector<WordId>, Hyp>> stacks(src.size() + 1);
  stacks[0].emplace(std::vector<WordId>{NGramModel::kBos}, Hyp{0.0, {NGramModel::kBos}, {}});
  auto better = [](const Hyp& a, const Hyp& b) { return a.score != b.score ? a.score > b.score : a.output < b.output; };
  for (std::size_t pos = 0; pos < src.size(); ++pos) {
    std::vector<Hyp> hyps;
    for (auto& [k, h] : stacks[pos]) hyps.push_back(std::move(h));
    std::sort(hyps.begin(), hyps.end(), better);
    if (hyps.size() > opt.beam) hyps.resize(opt.beam);
    for (const auto& h : hyps) {
      for (std::size_t len = 1; len <= options[pos].size(); ++len) {
        for (const auto& o : options[pos][len - 1]) {
          Hyp next{h.score + o.feature_score, h.history, h.output};
          std::vector<WordId> ctx = h.history;
          double lm_score = 0.0;
          for (const auto& tok : o.target) {
            const WordId id = lm.id(tok);
            lm_score += lm.log_prob(ctx, id);
            ctx.push_back(id);
            if (ctx.size() > keep) ctx.erase(ctx.begin());
            next.output.push_back(tok);
          }
          next.score += w.lm * lm_score;
          next.history = ctx;
          auto& stack = stacks[pos + len];
          auto it = stack.find(ctx);
          if (it == stack.end()) stack.emplace(std::move(ctx), std::move(next));
          else if (better(next, it->second)) it->second = std::move(next);
        }
      }
    }
  }
  PbsmtResult best;
  bool found = false;
  for (const auto& [k, h] : stacks[src.size()]) {
    const double final_score = h.score + w.lm * lm.log_prob(h.history, NGramModel::kEos);
    if (!found || final_score > best.score || (final_score == best.score && h.output < best.output)) {
      best = {h.output, final_score};
      found = true;
    }
  }
  return best;
}

inline Sentence decode_monotone(const std::vector<const PhraseTable*>& tables, const NGramModel& lm,
                                const PbsmtWeights& weights, const Sentence& src, std::size_t beam = 100) {
  const PhraseIndex index(tables);
  PbsmtOptions opt;
  opt.beam = beam;
  return decode_monotone_scored(index, lm, weights, src, opt).output;
}

}  // namespace lowres_mt
