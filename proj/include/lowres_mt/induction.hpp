#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "lowres_mt/phrase_table.hpp"

namespace lowres_mt {

struct InductionConfig {
  double beta = 30.0;
  std::size_t dim = 200;
  std::size_t n_best = 300;
  std::size_t max_vocab_words = 300000;
  std::size_t max_phrases = 300000;
  std::size_t mono_sample = 10000000;
};

// ---- word2phrase ---------------------------------------------------------

/// Merges adjacent tokens a b into a_b when
///   (count(ab) - delta) * N / (count(a) * count(b)) > threshold
/// with N the token count. Each pass recounts on the previous pass output,
/// so k passes can build phrases of up to 2^k words.
inline MonolingualCorpus word2phrase(const MonolingualCorpus& mono, double delta = 5.0, double threshold = 100.0,
                                     std::size_t passes = 1) {
  if (passes < 1) throw Error("word2phrase: passes must be >= 1");
  if (delta < 0) throw Error("word2phrase: delta must be >= 0");
  MonolingualCorpus cur = mono;
  for (std::size_t pass = 0; pass < passes; ++pass) {
    std::unordered_map<std::string, double> uni;
    std::map<std::pair<std::string, std::string>, double> bi;
    double n = 0;
    for (const auto& s : cur.sentences) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        uni[s[i]] += 1;
        n += 1;
        if (i + 1 < s.size()) bi[{s[i], s[i + 1]}] += 1;
      }
    }
    for (auto& s : cur.sentences) {
      Sentence out;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size()) {
          const double score = (bi[{s[i], s[i + 1]}] - delta) * n / (uni[s[i]] * uni[s[i + 1]]);
          if (score > threshold) {
            out.push_back(s[i] + "_" + s[i + 1]);
            ++i;
            continue;
          }
        }
        out.push_back(s[i]);
      }
      s = std::move(out);
    }
  }
  return cur;
}

/// Most frequent tokens of a word2phrase-processed corpus as word sequences,
/// restricted to phrases whose words are all in `allowed` (when non-empty).
inline std::vector<Sentence> frequent_phrases(const MonolingualCorpus& phrased, std::size_t max_phrases,
                                              const std::unordered_map<std::string, std::size_t>& allowed = {}) {
  std::map<std::string, std::size_t> freq;
  for (const auto& s : phrased.sentences)
    for (const auto& t : s) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<Sentence> out;
  for (const auto& [tok, f] : items) {
    if (out.size() >= max_phrases) break;
    Sentence words;
    std::size_t b = 0;
    for (std::size_t i = 0; i <= tok.size(); ++i)
      if (i == tok.size() || tok[i] == '_') {
        if (i > b) words.push_back(tok.substr(b, i - b));
        b = i + 1;
      }
    if (words.empty()) continue;
    if (!allowed.empty() &&
        !std::all_of(words.begin(), words.end(), [&](const std::string& w) { return allowed.count(w) > 0; }))
      continue;
    out.push_back(std::move(words));
  }
  return out;
}

// ---- embeddings ----------------------------------------------------------

struct EmbeddingSpace {
  std::size_t dim = 0;
  std::vector<std::string> words;
  std::unordered_map<std::string, std::size_t> index;
  Eigen::MatrixXd vectors;                // one row per word
  std::optional<Eigen::MatrixXd> mapping; // orthogonal dim x dim, applied as W * v

  bool contains(const std::string& w) const { return index.count(w) > 0; }

  Eigen::VectorXd raw(const std::string& w) const { return vectors.row(static_cast<Eigen::Index>(index.at(w))).transpose(); }

  /// Vector in the shared space (mapping applied when present).
  Eigen::VectorXd vec(const std::string& w) const {
    Eigen::VectorXd v = raw(w);
    return mapping ? Eigen::VectorXd(*mapping * v) : v;
  }

  void add(const std::string& w, const Eigen::VectorXd& v) {
    index.emplace(w, words.size());
    words.push_back(w);
    vectors.conservativeResize(static_cast<Eigen::Index>(words.size()), static_cast<Eigen::Index>(dim));
    vectors.row(static_cast<Eigen::Index>(words.size() - 1)) = v.transpose();
  }
};

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0.0;
  return a.dot(b) / (na * nb);
}

struct SkipGramOptions {
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
};

/// Skip-gram with negative sampling over the cfg.max_vocab_words most
/// frequent words. Single-threaded and fully determined by the seed.
inline EmbeddingSpace train_embeddings(const MonolingualCorpus& mono, const InductionConfig& cfg, std::uint64_t seed,
                                       const SkipGramOptions& opt = {}) {
  if (mono.sentences.empty()) throw Error("train_embeddings: empty corpus");
  if (cfg.dim < 2) throw Error("train_embeddings: dim must be >= 2");
  std::mt19937_64 rng(seed);

  std::vector<const Sentence*> sample;
  for (const auto& s : mono.sentences) sample.push_back(&s);
  if (sample.size() > cfg.mono_sample) {
    for (std::size_t i = 0; i < cfg.mono_sample; ++i) std::swap(sample[i], sample[i + uniform_index(rng, sample.size() - i)]);
    sample.resize(cfg.mono_sample);
  }
  std::map<std::string, std::size_t> freq;
  for (const auto* s : sample)
    for (const auto& t : *s) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (items.size() > cfg.max_vocab_words) items.resize(cfg.max_vocab_words);
  if (items.empty()) throw Error("train_embeddings: empty corpus");

  EmbeddingSpace space;
  space.dim = cfg.dim;
  for (const auto& [w, f] : items) {
    space.index.emplace(w, space.words.size());
    space.words.push_back(w);
  }
  const auto V = static_cast<Eigen::Index>(space.words.size());
  const auto D = static_cast<Eigen::Index>(cfg.dim);
  Eigen::MatrixXd in(D, V), out = Eigen::MatrixXd::Zero(D, V);
  for (Eigen::Index w = 0; w < V; ++w)
    for (Eigen::Index d = 0; d < D; ++d) in(d, w) = (uniform_real(rng) - 0.5) / static_cast<double>(D);

  std::vector<double> cdf(static_cast<std::size_t>(V));
  double z = 0;
  for (std::size_t i = 0; i < cdf.size(); ++i) cdf[i] = (z += std::pow(static_cast<double>(items[i].second), 0.75));
  auto draw_negative = [&] {
    const double u = uniform_real(rng) * z;
    return static_cast<Eigen::Index>(std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), cdf.size() - 1));
  };

  std::vector<std::vector<Eigen::Index>> corpus_ids;
  std::size_t total = 0;
  for (const auto* s : sample) {
    std::vector<Eigen::Index> ids;
    for (const auto& t : *s) {
      auto it = space.index.find(t);
      if (it != space.index.end()) ids.push_back(static_cast<Eigen::Index>(it->second));
    }
    total += ids.size();
    corpus_ids.push_back(std::move(ids));
  }
  const double steps = static_cast<double>(std::max<std::size_t>(1, total * opt.epochs));
  double done = 0;
  Eigen::VectorXd grad(D);
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    for (const auto& ids : corpus_ids) {
      for (std::size_t i = 0; i < ids.size(); ++i, done += 1) {
        const double lr = std::max(opt.learning_rate * 1e-4, opt.learning_rate * (1.0 - done / steps));
        const std::size_t b = uniform_index(rng, opt.window);
        const std::size_t span = opt.window - b;
        const std::size_t lo = i >= span ? i - span : 0, hi = std::min(ids.size() - 1, i + span);
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == i) continue;
          const Eigen::Index center = ids[i];
          grad.setZero();
          for (std::size_t k = 0; k <= opt.negatives; ++k) {
            const Eigen::Index target = k == 0 ? ids[c] : draw_negative();
            if (k > 0 && target == ids[c]) continue;
            const double label = k == 0 ? 1.0 : 0.0;
            const double g = (label - sigmoid(in.col(center).dot(out.col(target)))) * lr;
            grad += g * out.col(target);
            out.col(target) += g * in.col(center);
          }
          in.col(center) += grad;
        }
      }
    }
  }
  space.vectors = in.transpose();
  return space;
}

/// Orthogonal Procrustes: W = U V^T for U S V^T = svd(sum_i y_i x_i^T), the
/// orthogonal W minimizing sum_i |W x_i - y_i|^2. Returns a copy of `src`
/// with the mapping set.
inline EmbeddingSpace map_embeddings(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                                     const std::vector<std::pair<std::string, std::string>>& seed_dict) {
  if (src.dim != tgt.dim) throw Error("map_embeddings: dimension mismatch");
  const auto D = static_cast<Eigen::Index>(src.dim);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(D, D);
  std::size_t used = 0;
  for (const auto& [a, b] : seed_dict) {
    if (!src.contains(a) || !tgt.contains(b)) continue;
    m += tgt.raw(b) * src.raw(a).transpose();
    ++used;
  }
  if (used < src.dim)
    throw Error("map_embeddings: " + std::to_string(used) + " usable seed pairs, need at least " +
                std::to_string(src.dim));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  EmbeddingSpace out = src;
  out.mapping = svd.matrixU() * svd.matrixV().transpose();
  return out;
}

// ---- phrase-table induction ---------------------------------------------

/// p_i = exp(beta c_i) / sum_j exp(beta c_j)
inline std::vector<double> induction_softmax(std::span<const double> cosines, double beta) {
  if (cosines.empty()) throw Error("induction_softmax: empty candidate set");
  const double mx = *std::max_element(cosines.begin(), cosines.end());
  std::vector<double> p(cosines.size());
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(beta * (cosines[i] - mx)));
  for (auto& x : p) x = std::max(x / z, std::numeric_limits<double>::min());
  return p;
}

/// Word-averaged lexical probability with all-to-all links:
/// prod_j (1/(|s|+1)) sum_{i in s + NULL} t(t_j | s_i).
inline double unaligned_lexical_weight(const Sentence& src, const Sentence& tgt, const LexicalTable& t_given_s) {
  double w = 1.0;
  for (const auto& tj : tgt) {
    double sum = t_given_s.prob(tj, kNullWord);
    for (const auto& si : src) sum += t_given_s.prob(tj, si);
    w *= std::max(sum / static_cast<double>(src.size() + 1), 1e-10);
  }
  return std::min(w, 1.0);
}

/// Builds a table from monolingual phrase lists in a shared embedding space.
/// Phrase vectors average their (mapped) word vectors; phrases with words
/// outside the embedded vocabulary are skipped. p(t|s) is a softmax over all
/// candidate targets; each source keeps cfg.n_best targets. p(s|t) is the
/// softmax over all sources for target t.
inline PhraseTable induce_phrase_table(const std::vector<Sentence>& src_phrases,
                                       const std::vector<Sentence>& tgt_phrases, const EmbeddingSpace& src_space,
                                       const EmbeddingSpace& tgt_space, const LexicalTable& lex_fwd,
                                       const LexicalTable& lex_bwd, const InductionConfig& cfg) {
  if (cfg.beta <= 0) throw Error("induce_phrase_table: beta must be > 0");
  if (cfg.n_best < 1) throw Error("induce_phrase_table: n_best must be >= 1");
  auto embed = [](const std::vector<Sentence>& phrases, const EmbeddingSpace& space, std::vector<Sentence>& kept) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& p : phrases) {
      if (p.empty() || !std::all_of(p.begin(), p.end(), [&](const std::string& w) { return space.contains(w); }))
        continue;
      Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.dim));
      for (const auto& w : p) v += space.vec(w);
      v /= static_cast<double>(p.size());
      if (v.norm() == 0) continue;
      out.push_back(v.normalized());
      kept.push_back(p);
    }
    return out;
  };
  std::vector<Sentence> srcs, tgts;
  const auto sv = embed(src_phrases, src_space, srcs);
  const auto tv = embed(tgt_phrases, tgt_space, tgts);
  if (sv.empty() || tv.empty()) throw Error("induce_phrase_table: empty candidate set");

  Eigen::MatrixXd s_mat(static_cast<Eigen::Index>(sv.size()), static_cast<Eigen::Index>(src_space.dim));
  Eigen::MatrixXd t_mat(static_cast<Eigen::Index>(tv.size()), static_cast<Eigen::Index>(tgt_space.dim));
  for (std::size_t i = 0; i < sv.size(); ++i) s_mat.row(static_cast<Eigen::Index>(i)) = sv[i].transpose();
  for (std::size_t j = 0; j < tv.size(); ++j) t_mat.row(static_cast<Eigen::Index>(j)) = tv[j].transpose();
  const Eigen::MatrixXd cos = s_mat * t_mat.transpose();  // |S| x |T|

  // p(s|t): softmax down each column
  Eigen::MatrixXd p_s_given_t(cos.rows(), cos.cols());
  for (Eigen::Index j = 0; j < cos.cols(); ++j) {
    std::vector<double> col(static_cast<std::size_t>(cos.rows()));
    for (Eigen::Index i = 0; i < cos.rows(); ++i) col[static_cast<std::size_t>(i)] = cos(i, j);
    const auto p = induction_softmax(col, cfg.beta);
    for (Eigen::Index i = 0; i < cos.rows(); ++i) p_s_given_t(i, j) = p[static_cast<std::size_t>(i)];
  }
  std::vector<std::string> tgt_text;
  for (const auto& t : tgts) tgt_text.push_back(join_tokens(t));

  PhraseTable pt;
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(cos.cols()));
    for (Eigen::Index j = 0; j < cos.cols(); ++j) row[static_cast<std::size_t>(j)] = cos(i, j);
    const auto p = induction_softmax(row, cfg.beta);
    std::vector<std::size_t> order(p.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return p[a] != p[b] ? p[a] > p[b] : tgt_text[a] < tgt_text[b];
    });
    if (order.size() > cfg.n_best) order.resize(cfg.n_best);
    const auto& s = srcs[static_cast<std::size_t>(i)];
    for (auto j : order) {
      const auto& t = tgts[j];
      pt.entries.push_back({join_tokens(s), tgt_text[j], p[j], unaligned_lexical_weight(s, t, lex_fwd),
                            p_s_given_t(i, static_cast<Eigen::Index>(j)), unaligned_lexical_weight(t, s, lex_bwd)});
    }
  }
  pt.sort();
  return pt;
}

}  // namespace lowres_mt
