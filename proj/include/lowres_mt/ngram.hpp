#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lowres_mt/corpus.hpp"

namespace lowres_mt {

using WordId = std::uint32_t;
using NGramKey = std::vector<WordId>;

struct NGramKeyHash {
  std::size_t operator()(const NGramKey& k) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto w : k) h = (h ^ w) * 1099511628211ULL;
    return static_cast<std::size_t>(h);
  }
};

/// Absolute discounts for counts 1, 2 and 3+ of one order.
struct KneserNeyDiscounts {
  std::array<double, 3> d{0.5, 1.0, 1.5};

  double operator()(double count) const {
    if (count <= 0) return 0.0;
    return count < 2 ? d[0] : count < 3 ? d[1] : d[2];
  }
};

/// Modified Kneser-Ney discounts from counts-of-counts n1..n4. When the
/// statistics are too thin to yield valid discounts (n_k == 0, or some D_k
/// outside (0, k]) the fixed fallback {0.5, 1.0, 1.5} is used instead.
inline KneserNeyDiscounts modified_kn_discounts(const std::array<double, 4>& n) {
  KneserNeyDiscounts out;
  if (n[0] <= 0 || n[1] <= 0 || n[2] <= 0 || n[3] <= 0) return out;
  const double y = n[0] / (n[0] + 2 * n[1]);
  const std::array<double, 3> d{1 - 2 * y * n[1] / n[0], 2 - 3 * y * n[2] / n[1], 3 - 4 * y * n[3] / n[2]};
  for (int k = 0; k < 3; ++k)
    if (!(d[k] > 0 && d[k] <= k + 1)) return out;
  out.d = d;
  return out;
}

/// Interpolated modified Kneser-Ney n-gram model, stored in backoff form:
/// each seen n-gram holds its interpolated probability, each seen context
/// holds the interpolation weight of its lower order.
class NGramModel {
 public:
  static constexpr WordId kUnk = 0, kBos = 1, kEos = 2;

  struct Entry {
    double prob = 0.0;     // p(w | h); 0 for <s>, which is never predicted
    double backoff = 1.0;  // gamma(h w) when this n-gram is a context
  };

  NGramModel() = default;

  int order() const { return order_; }
  std::size_t vocab_size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<KneserNeyDiscounts>& discounts() const { return discounts_; }

  bool in_vocab(const std::string& w) const { return ids_.count(w) > 0; }

  WordId id(const std::string& w) const {
    auto it = ids_.find(w);
    return it == ids_.end() ? kUnk : it->second;
  }

  /// p(w | context); context is the full left history (only the last
  /// order-1 ids are consulted).
  double prob(std::span<const WordId> context, WordId w) const {
    if (context.size() + 1 > static_cast<std::size_t>(order_))
      context = context.subspan(context.size() - (order_ - 1));
    double scale = 1.0;
    NGramKey key;
    for (;;) {
      key.assign(context.begin(), context.end());
      key.push_back(w);
      const auto& table = tables_[context.size()];
      auto it = table.find(key);
      if (it != table.end()) return scale * it->second.prob;
      if (context.empty()) return 0.0;  // only reachable for <s>
      key.pop_back();
      const auto& ctable = tables_[context.size() - 1];
      auto ct = ctable.find(key);
      if (ct != ctable.end()) scale *= ct->second.backoff;
      context = context.subspan(1);
    }
  }

  double log_prob(std::span<const WordId> context, WordId w) const { return std::log(prob(context, w)); }

  /// Per-token cross-entropy in nats, including the end-of-sentence event.
  double cross_entropy(const Sentence& s) const {
    if (s.empty()) throw Error("cross_entropy: empty sentence");
    std::vector<WordId> hist{kBos};
    double total = 0.0;
    for (const auto& tok : s) {
      const WordId w = id(tok);
      total += log_prob(hist, w);
      hist.push_back(w);
    }
    total += log_prob(hist, kEos);
    return -total / static_cast<double>(s.size() + 1);
  }

  double perplexity(const std::vector<Sentence>& sents) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : sents) {
      total += cross_entropy(s) * static_cast<double>(s.size() + 1);
      n += s.size() + 1;
    }
    return std::exp(total / static_cast<double>(n));
  }

  bool has_oov(const Sentence& s) const {
    for (const auto& tok : s)
      if (!in_vocab(tok)) return true;
    return false;
  }

  /// Every context stored at some order (histories with a nonzero count).
  std::vector<NGramKey> contexts() const {
    std::vector<NGramKey> out;
    for (int m = 0; m + 1 < order_; ++m)
      for (const auto& [k, seen] : context_seen_[m]) out.push_back(k);
    out.push_back({});
    return out;
  }

  /// Symbols p(.|h) is defined over: the vocabulary without <s>.
  std::vector<WordId> predictable() const {
    std::vector<WordId> out;
    for (WordId w = 0; w < words_.size(); ++w)
      if (w != kBos) out.push_back(w);
    return out;
  }

  friend NGramModel train_ngram(const std::vector<Sentence>& corpus, int order);
  friend NGramModel load_ngram(const Path& path);
  friend void save_ngram(const NGramModel& model, const Path& path);

 private:
  void init_vocab(const std::vector<std::string>& sorted_words) {
    words_ = {"<unk>", "<s>", "</s>"};
    for (const auto& w : sorted_words)
      if (w != "<unk>" && w != "<s>" && w != "</s>") words_.push_back(w);
    ids_.clear();
    for (WordId i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], i);
  }

  int order_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> ids_;
  std::vector<std::unordered_map<NGramKey, Entry, NGramKeyHash>> tables_;
  std::vector<std::unordered_map<NGramKey, bool, NGramKeyHash>> context_seen_;
  std::vector<KneserNeyDiscounts> discounts_;
};

/// Trains an interpolated modified Kneser-Ney model. The highest order uses
/// raw counts; lower orders use continuation counts, except n-grams that
/// start with <s>, which keep raw counts.
inline NGramModel train_ngram(const std::vector<Sentence>& corpus, int order) {
  if (order < 1 || order > 6) throw Error("train_ngram: order must be in [1,6], got " + std::to_string(order));
  if (corpus.empty()) throw Error("train_ngram: empty corpus");
  NGramModel model;
  model.order_ = order;
  {
    std::map<std::string, int> seen;
    for (const auto& s : corpus)
      for (const auto& t : s) seen.emplace(t, 0);
    std::vector<std::string> sorted;
    for (auto& [w, _] : seen) sorted.push_back(w);
    model.init_vocab(sorted);
  }
  using Counts = std::unordered_map<NGramKey, double, NGramKeyHash>;
  std::vector<Counts> raw(order);
  std::size_t tokens = 0;
  for (const auto& s : corpus) {
    std::vector<WordId> seq{NGramModel::kBos};
    for (const auto& t : s) seq.push_back(model.id(t));
    seq.push_back(NGramModel::kEos);
    tokens += s.size();
    for (std::size_t j = 1; j < seq.size(); ++j)
      for (int m = 1; m <= order && static_cast<std::size_t>(m) <= j + 1; ++m)
        raw[m - 1][NGramKey(seq.begin() + static_cast<std::ptrdiff_t>(j + 1 - m), seq.begin() + static_cast<std::ptrdiff_t>(j + 1))] += 1;
  }
  if (tokens == 0) throw Error("train_ngram: empty corpus");

  // adjusted counts
  std::vector<Counts> adj(order);
  adj[order - 1] = raw[order - 1];
  for (int m = order - 1; m >= 1; --m) {
    auto& a = adj[m - 1];
    for (const auto& [g, c] : raw[m - 1])
      if (g.front() == NGramModel::kBos) a[g] = c;
    for (const auto& [g, c] : raw[m]) {
      NGramKey suffix(g.begin() + 1, g.end());
      if (suffix.front() != NGramModel::kBos) a[suffix] += 1;
    }
  }

  model.tables_.assign(order, {});
  model.context_seen_.assign(order, {});
  model.discounts_.assign(order, {});
  for (int m = 1; m <= order; ++m) {
    std::array<double, 4> n{};
    for (const auto& [g, c] : adj[m - 1])
      if (c >= 1 && c <= 4) n[static_cast<int>(c) - 1] += 1;
    model.discounts_[m - 1] = modified_kn_discounts(n);
  }

  const std::size_t predictable = model.words_.size() - 1;  // all but <s>
  for (int m = 1; m <= order; ++m) {
    const auto& disc = model.discounts_[m - 1];
    struct Ctx {
      double total = 0, n1 = 0, n2 = 0, n3 = 0;
    };
    std::unordered_map<NGramKey, Ctx, NGramKeyHash> ctx;
    for (const auto& [g, c] : adj[m - 1]) {
      auto& x = ctx[NGramKey(g.begin(), g.end() - 1)];
      x.total += c;
      (c < 2 ? x.n1 : c < 3 ? x.n2 : x.n3) += 1;
    }
    auto gamma = [&](const Ctx& x) { return (disc.d[0] * x.n1 + disc.d[1] * x.n2 + disc.d[2] * x.n3) / x.total; };
    auto& table = model.tables_[m - 1];
    if (m == 1) {
      const auto& root = ctx[{}];
      const double g = gamma(root);
      for (WordId w = 0; w < model.words_.size(); ++w) {
        if (w == NGramModel::kBos) {
          table[{w}].prob = 0.0;
          continue;
        }
        auto it = adj[0].find({w});
        const double c = it == adj[0].end() ? 0.0 : it->second;
        table[{w}].prob = std::max(c - disc(c), 0.0) / root.total + g / static_cast<double>(predictable);
      }
    } else {
      for (const auto& [g, c] : adj[m - 1]) {
        NGramKey h(g.begin(), g.end() - 1);
        const auto& x = ctx.at(h);
        const double lower = model.prob(std::span<const WordId>(g.data() + 1, g.size() - 2), g.back());
        table[g].prob = std::max(c - disc(c), 0.0) / x.total + gamma(x) * lower;
      }
    }
    if (m >= 2) {
      for (const auto& [h, x] : ctx) {
        model.tables_[m - 2][h].backoff = gamma(x);
        model.context_seen_[m - 2][h] = true;
      }
    }
  }
  return model;
}

// Text format:
//   order N / vocab V / discounts m D1 D2 D3+ (one line per order)
//   then per order a "\m-grams:" block of `w1 .. wm<TAB>log10 p<TAB>log10 backoff`,
//   n-grams in lexicographic order of their words.
inline void save_ngram(const NGramModel& model, const Path& path) {
  std::string out = "order " + std::to_string(model.order_) + "\nvocab " + std::to_string(model.words_.size()) + "\n";
  for (int m = 1; m <= model.order_; ++m) {
    const auto& d = model.discounts_[m - 1].d;
    out += "discounts " + std::to_string(m) + " " + format_double(d[0], 17) + " " + format_double(d[1], 17) + " " +
           format_double(d[2], 17) + "\n";
  }
  for (int m = 1; m <= model.order_; ++m) {
    out += "\n\\" + std::to_string(m) + "-grams:\n";
    std::vector<std::pair<std::vector<std::string>, const NGramModel::Entry*>> rows;
    for (const auto& [k, e] : model.tables_[m - 1]) {
      std::vector<std::string> ws;
      for (auto id : k) ws.push_back(model.words_[id]);
      rows.emplace_back(std::move(ws), &e);
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [ws, e] : rows) {
      out += join_tokens(ws);
      out += '\t';
      out += e->prob > 0 ? format_double(std::log10(e->prob), 17) : "-99";
      out += '\t';
      out += format_double(std::log10(e->backoff), 17);
      out += '\n';
    }
  }
  write_file(path, out);
}

inline NGramModel load_ngram(const Path& path) {
  const auto lines = read_lines(path);
  NGramModel model;
  std::size_t i = 0;
  auto fail = [&](const std::string& why) { throw Error(path.string() + ":" + std::to_string(i + 1) + ": " + why); };
  std::vector<std::string> header_words;
  for (; i < lines.size() && !lines[i].empty(); ++i) {
    auto f = split_tokens(lines[i]);
    if (f.size() >= 2 && f[0] == "order") {
      model.order_ = std::stoi(f[1]);
      if (model.order_ < 1 || model.order_ > 6) fail("bad order");
      model.tables_.assign(model.order_, {});
      model.context_seen_.assign(model.order_, {});
      model.discounts_.assign(model.order_, {});
    } else if (f.size() == 5 && f[0] == "discounts") {
      const int m = std::stoi(f[1]);
      if (m < 1 || m > model.order_) fail("bad discount order");
      model.discounts_[m - 1].d = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
    } else if (f.size() == 2 && f[0] == "vocab") {
    } else {
      fail("unexpected header line");
    }
  }
  if (model.order_ == 0) fail("missing order");
  struct Row {
    std::vector<std::string> words;
    double prob, backoff;
  };
  std::vector<std::vector<Row>> rows(model.order_);
  int m = 0;
  for (; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (l.empty()) continue;
    if (l.front() == '\\') {
      m = std::stoi(l.substr(1));
      if (m < 1 || m > model.order_) fail("bad block header");
      continue;
    }
    const auto t1 = l.find('\t'), t2 = l.rfind('\t');
    if (m == 0 || t1 == std::string::npos || t1 == t2) fail("malformed n-gram line");
    Row r{split_tokens(l.substr(0, t1)), 0.0, 1.0};
    if (static_cast<int>(r.words.size()) != m) fail("n-gram length does not match block");
    const double lp = std::stod(l.substr(t1 + 1, t2 - t1 - 1));
    r.prob = lp <= -99 ? 0.0 : std::pow(10.0, lp);
    r.backoff = std::pow(10.0, std::stod(l.substr(t2 + 1)));
    rows[m - 1].push_back(std::move(r));
  }
  std::vector<std::string> vocab;
  for (const auto& r : rows[0]) vocab.push_back(r.words[0]);
  model.init_vocab(vocab);
  for (int k = 0; k < model.order_; ++k)
    for (const auto& r : rows[k]) {
      NGramKey key;
      for (const auto& w : r.words) {
        if (!model.ids_.count(w)) throw Error(path.string() + ": n-gram uses a word missing from the unigrams: " + w);
        key.push_back(model.ids_.at(w));
      }
      model.tables_[k][key] = {r.prob, r.backoff};
      if (r.backoff != 1.0) model.context_seen_[k][key] = true;
    }
  for (WordId w = 0; w < model.words_.size(); ++w)
    if (!model.tables_[0].count({w})) model.tables_[0][{w}] = {0.0, 1.0};
  return model;
}

}  // namespace lowres_mt
