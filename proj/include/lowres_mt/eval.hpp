#pragma once

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lowres_mt/common.hpp"

namespace lowres_mt {

/// Sufficient statistics of corpus BLEU: clipped matches and totals per order.
struct BleuStats {
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};
  double hyp_len = 0;
  double ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < 4; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

struct BleuScore {
  double score = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  double ratio() const { return ref_len ? static_cast<double>(hyp_len) / static_cast<double>(ref_len) : 0.0; }
};

inline BleuStats sentence_bleu_stats(const Sentence& hyp, const Sentence& ref) {
  BleuStats st;
  st.hyp_len = static_cast<double>(hyp.size());
  st.ref_len = static_cast<double>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, int> ref_counts, hyp_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[{ref.begin() + static_cast<long>(i), ref.begin() + static_cast<long>(i + n)}];
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[{hyp.begin() + static_cast<long>(i), hyp.begin() + static_cast<long>(i + n)}];
    double m = 0;
    for (const auto& [g, c] : hyp_counts) {
      auto it = ref_counts.find(g);
      if (it != ref_counts.end()) m += std::min(c, it->second);
    }
    st.matches[n - 1] = m;
    st.totals[n - 1] = hyp.size() >= n ? static_cast<double>(hyp.size() - n + 1) : 0.0;
  }
  return st;
}

/// Corpus BLEU from accumulated statistics, no smoothing.
inline BleuScore bleu_from_stats(const BleuStats& st) {
  BleuScore b;
  b.hyp_len = static_cast<std::size_t>(st.hyp_len);
  b.ref_len = static_cast<std::size_t>(st.ref_len);
  // An order with no hypothesis n-grams at all (every hypothesis shorter
  // than n) has no defined precision and is left out of the mean.
  bool zero = false;
  double log_sum = 0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    b.precisions[n] = st.totals[n] > 0 ? st.matches[n] / st.totals[n] : 0.0;
    if (st.totals[n] <= 0) {
      if (n == 0) zero = true;
      continue;
    }
    ++orders;
    if (b.precisions[n] <= 0) zero = true;
    else log_sum += std::log(b.precisions[n]);
  }
  b.brevity_penalty = st.hyp_len <= 0 ? 0.0 : std::min(1.0, std::exp(1.0 - st.ref_len / st.hyp_len));
  b.score = zero ? 0.0 : 100.0 * b.brevity_penalty * std::exp(log_sum / orders);
  return b;
}

inline BleuScore bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  if (hyps.size() != refs.size())
    throw Error("bleu: " + std::to_string(hyps.size()) + " hypotheses but " + std::to_string(refs.size()) + " references");
  if (hyps.empty()) throw Error("bleu: empty input");
  BleuStats st;
  for (std::size_t i = 0; i < hyps.size(); ++i) st += sentence_bleu_stats(hyps[i], refs[i]);
  return bleu_from_stats(st);
}

/// `BLEU = SS.SS, p1/p2/p3/p4 (BP=b.bbb, ratio=r.rrr, hyp_len=H, ref_len=R)`
inline std::string format_bleu(const BleuScore& b) {
  std::string out = "BLEU = " + format_fixed(b.score, 2) + ", ";
  for (int n = 0; n < 4; ++n) {
    if (n) out += "/";
    out += format_fixed(100.0 * b.precisions[n], 1);
  }
  out += " (BP=" + format_fixed(b.brevity_penalty, 3) + ", ratio=" + format_fixed(b.ratio(), 3) +
         ", hyp_len=" + std::to_string(b.hyp_len) + ", ref_len=" + std::to_string(b.ref_len) + ")";
  return out;
}

struct SignificanceReport {
  double bleu_a = 0, bleu_b = 0;
  double delta_bleu = 0;  // BLEU(A) - BLEU(B) on the full set
  double p_value = 1;
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  bool significant(double level = 0.05) const { return p_value < level; }
  bool operator==(const SignificanceReport&) const = default;
};

/// Paired bootstrap resampling of the test set. The p-value is the
/// one-sided estimate that A is not better than B: the fraction of
/// resamples where BLEU(A) < BLEU(B), with ties counted as half. Resample b
/// draws its indices from a generator seeded by mix_seed(seed, b).
inline SignificanceReport paired_bootstrap(const std::vector<Sentence>& hyp_a, const std::vector<Sentence>& hyp_b,
                                           const std::vector<Sentence>& refs, std::size_t samples = 1000,
                                           std::uint64_t seed = 1, unsigned threads = 1) {
  if (hyp_a.size() != refs.size() || hyp_b.size() != refs.size())
    throw Error("paired_bootstrap: hypothesis/reference length mismatch");
  if (refs.empty()) throw Error("paired_bootstrap: empty input");
  if (samples < 1) throw Error("paired_bootstrap: need at least one resample");
  std::vector<BleuStats> sa, sb;
  BleuStats ta, tb;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    sa.push_back(sentence_bleu_stats(hyp_a[i], refs[i]));
    sb.push_back(sentence_bleu_stats(hyp_b[i], refs[i]));
    ta += sa.back();
    tb += sb.back();
  }
  SignificanceReport rep;
  rep.bleu_a = bleu_from_stats(ta).score;
  rep.bleu_b = bleu_from_stats(tb).score;
  rep.delta_bleu = rep.bleu_a - rep.bleu_b;
  rep.samples = samples;
  rep.seed = seed;
  std::vector<double> outcome(samples);
  parallel_for(samples, threads, [&](std::size_t b) {
    std::mt19937_64 rng(mix_seed(seed, b));
    BleuStats ra, rb;
    for (std::size_t k = 0; k < refs.size(); ++k) {
      const std::size_t i = uniform_index(rng, refs.size());
      ra += sa[i];
      rb += sb[i];
    }
    const double d = bleu_from_stats(ra).score - bleu_from_stats(rb).score;
    outcome[b] = d < 0 ? 1.0 : d == 0 ? 0.5 : 0.0;
  });
  double against = 0;
  for (double o : outcome) against += o;
  rep.p_value = against / static_cast<double>(samples);
  return rep;
}

}  // namespace lowres_mt
