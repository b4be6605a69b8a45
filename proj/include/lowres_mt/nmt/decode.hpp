#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lowres_mt/nmt/model.hpp"

namespace lowres_mt::nmt {

struct DecodeConfig {
  std::size_t beam = 4;      // SIZE_MAX: exhaustive search
  double alpha = 0.0;        // length-penalty exponent
  std::size_t max_len = 0;   // 0: 2 * untagged source length + 5

  void validate() const {
    if (beam < 1) throw Error("decode: beam must be >= 1");
    if (!(alpha >= 0.0)) throw Error("decode: alpha must be >= 0");
  }
};

/// ((5 + len) / 6)^alpha, len counting </s>.
inline double length_penalty(std::size_t len, double alpha) {
  return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

struct Hypothesis {
  std::vector<TokenId> tokens;  // emitted tokens, ending with </s> when finished
  double log_prob = 0.0;
  double score = 0.0;           // log_prob / length_penalty
};

namespace detail {

inline void check_tagged(const Vocab& vocab, std::span<const TokenId> src) {
  if (src.empty() || !is_tag_token(vocab.symbol(src.front())))
    throw Error("decode: source must begin with a language tag");
}

inline std::size_t effective_max_len(const ModelConfig& mc, const DecodeConfig& dc, std::size_t src_len) {
  if (dc.max_len) return dc.max_len;
  if (mc.max_decode_len) return mc.max_decode_len;
  return 2 * (src_len - 1) + 5;
}

/// Tokens the decoder may emit at a step.
inline bool emittable(const Vocab& vocab, TokenId id, bool eos_only) {
  if (id == Vocab::kEos) return true;
  if (eos_only) return false;
  return !vocab.is_control(id);
}

}  // namespace detail

/// Argmax decoding, one token per step; ties go to the smaller id.
inline Hypothesis greedy_decode(const Parameters& p, const ModelConfig& mc, const Vocab& vocab,
                                std::span<const TokenId> src, std::size_t max_len = 0) {
  detail::check_tagged(vocab, src);
  DecodeConfig dc;
  dc.max_len = max_len;
  const std::size_t limit = detail::effective_max_len(mc, dc, src.size());
  const EncoderState enc = encode(p, src);
  Vector state = enc.initial;
  TokenId prev = Vocab::kBos;
  Hypothesis h;
  for (std::size_t step = 0; step <= limit; ++step) {
    const Vector lp = decoder_step(p, enc, state, prev);
    TokenId best = -1;
    for (Eigen::Index i = 0; i < lp.size(); ++i) {
      const auto id = static_cast<TokenId>(i);
      if (!detail::emittable(vocab, id, step == limit)) continue;
      if (best < 0 || lp(i) > lp(best)) best = id;
    }
    h.tokens.push_back(best);
    h.log_prob += lp(best);
    prev = best;
    if (best == Vocab::kEos) break;
  }
  h.score = h.log_prob;
  return h;
}

/// Beam search. Each step ranks every extension of the open hypotheses by
/// log-probability; within the best `beam`, </s> extensions finish and the
/// rest form the next open set. Search ends once `beam` hypotheses have
/// finished or after max_len + 1 steps (the last step only allows </s>).
/// The finished hypothesis with the best log_prob / length_penalty wins.
inline Hypothesis beam_search(const Parameters& p, const ModelConfig& mc, const Vocab& vocab,
                              std::span<const TokenId> src, const DecodeConfig& dc) {
  dc.validate();
  detail::check_tagged(vocab, src);
  const std::size_t limit = detail::effective_max_len(mc, dc, src.size());
  const EncoderState enc = encode(p, src);

  struct Open {
    Hypothesis hyp;
    Vector state;
  };
  struct Ext {
    std::size_t parent;
    TokenId token;
    double log_prob;
  };
  std::vector<Open> open{{Hypothesis{}, enc.initial}};
  std::vector<Hypothesis> finished;
  auto better_ext = [&](const Ext& a, const Ext& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    const auto& ta = open[a.parent].hyp.tokens;
    const auto& tb = open[b.parent].hyp.tokens;
    if (ta != tb) return ta < tb;
    return a.token < b.token;
  };

  for (std::size_t step = 0; step <= limit && !open.empty() && finished.size() < dc.beam; ++step) {
    std::vector<Ext> exts;
    std::vector<Vector> states(open.size());
    for (std::size_t k = 0; k < open.size(); ++k) {
      states[k] = open[k].state;
      const TokenId prev = open[k].hyp.tokens.empty() ? Vocab::kBos : open[k].hyp.tokens.back();
      const Vector lp = decoder_step(p, enc, states[k], prev);
      for (Eigen::Index i = 0; i < lp.size(); ++i) {
        const auto id = static_cast<TokenId>(i);
        if (detail::emittable(vocab, id, step == limit)) exts.push_back({k, id, open[k].hyp.log_prob + lp(i)});
      }
    }
    const std::size_t keep = std::min(exts.size(), dc.beam);
    if (keep < exts.size()) {
      std::partial_sort(exts.begin(), exts.begin() + static_cast<std::ptrdiff_t>(keep), exts.end(), better_ext);
      exts.resize(keep);
    } else {
      std::sort(exts.begin(), exts.end(), better_ext);
    }
    std::vector<Open> next;
    for (const auto& e : exts) {
      Hypothesis h = open[e.parent].hyp;
      h.tokens.push_back(e.token);
      h.log_prob = e.log_prob;
      if (e.token == Vocab::kEos) {
        h.score = h.log_prob / length_penalty(h.tokens.size(), dc.alpha);
        finished.push_back(std::move(h));
      } else {
        next.push_back({std::move(h), states[e.parent]});
      }
    }
    open = std::move(next);
  }
  if (finished.empty()) throw Error("beam_search: no finished hypothesis");
  return *std::min_element(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
}

/// Decodes a tagged source sentence and returns the output without control symbols.
inline Sentence beam_decode(const Parameters& p, const ModelConfig& mc, const Vocab& vocab, const Sentence& src,
                            const DecodeConfig& dc) {
  if (src.empty() || !is_tag_token(src.front())) throw Error("decode: source must begin with a language tag");
  if (!vocab.contains(src.front())) throw Error("decode: language tag " + src.front() + " not in vocabulary");
  const auto ids = vocab.encode(src);
  const Hypothesis h = dc.beam == 1 ? greedy_decode(p, mc, vocab, ids, dc.max_len) : beam_search(p, mc, vocab, ids, dc);
  return vocab.decode(h.tokens);
}

/// Decodes many sentences; results are independent of the thread count.
inline std::vector<Sentence> translate_all(const Parameters& p, const ModelConfig& mc, const Vocab& vocab,
                                           const std::vector<Sentence>& sources, const DecodeConfig& dc,
                                           unsigned threads = 1) {
  std::vector<Sentence> out(sources.size());
  parallel_for(sources.size(), threads, [&](std::size_t i) { out[i] = beam_decode(p, mc, vocab, sources[i], dc); });
  return out;
}

}  // namespace lowres_mt::nmt
