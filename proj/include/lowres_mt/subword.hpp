#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lowres_mt/corpus.hpp"

namespace lowres_mt {

/// Byte-pair merges over UTF-8 characters. Non-final pieces of a word carry
/// the continuation marker ("low@@ er"). Language tags and `<...>` control
/// symbols are never split.
struct SubwordModel {
  static constexpr const char* kUnknown = "<unk>";

  std::vector<std::pair<std::string, std::string>> merges;
  std::set<std::string> alphabet;  // base characters seen at training time
  std::set<std::string> vocab;     // alphabet plus every merged symbol
  std::string marker = "@@";

  std::size_t vocab_size() const { return vocab.size(); }
};

namespace detail {

inline bool is_control_symbol(const std::string& tok) {
  return tok.size() >= 3 && tok.front() == '<' && tok.back() == '>';
}

using SymbolPair = std::pair<std::string, std::string>;

struct PairHash {
  std::size_t operator()(const SymbolPair& p) const {
    return std::hash<std::string>()(p.first) * 1000003u ^ std::hash<std::string>()(p.second);
  }
};

}  // namespace detail

/// Greedy most-frequent-pair learning; ties go to the lexicographically
/// smallest pair. Stops at target_vocab symbols or when no pair occurs twice.
inline SubwordModel learn_subword(const std::vector<std::vector<Sentence>>& corpora, std::size_t target_vocab,
                                  std::string marker = "@@") {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& corpus : corpora)
    for (const auto& s : corpus)
      for (const auto& tok : s)
        if (!detail::is_control_symbol(tok)) ++word_freq[tok];
  if (word_freq.empty()) throw Error("learn_subword: empty corpus");

  SubwordModel model;
  model.marker = std::move(marker);
  std::vector<std::vector<std::string>> words;
  std::vector<std::size_t> freqs;
  for (const auto& [w, f] : word_freq) {
    words.push_back(utf8_chars(w));
    freqs.push_back(f);
    model.alphabet.insert(words.back().begin(), words.back().end());
  }
  if (target_vocab <= model.alphabet.size())
    throw Error("learn_subword: target vocabulary " + std::to_string(target_vocab) +
                " must exceed the number of distinct characters (" + std::to_string(model.alphabet.size()) + ")");
  model.vocab = model.alphabet;

  std::unordered_map<detail::SymbolPair, long long, detail::PairHash> counts;
  std::unordered_map<detail::SymbolPair, std::set<std::size_t>, detail::PairHash> where;
  auto add_word = [&](std::size_t w, long long sign) {
    const auto& sy = words[w];
    for (std::size_t i = 0; i + 1 < sy.size(); ++i) {
      detail::SymbolPair p{sy[i], sy[i + 1]};
      counts[p] += sign * static_cast<long long>(freqs[w]);
      if (sign > 0) where[p].insert(w);
    }
  };
  for (std::size_t w = 0; w < words.size(); ++w) add_word(w, +1);

  while (model.vocab.size() < target_vocab) {
    const detail::SymbolPair* best = nullptr;
    long long best_count = 1;
    for (const auto& [p, c] : counts) {
      if (c > best_count || (c == best_count && best && c >= 2 && p < *best)) {
        best = &p;
        best_count = c;
      }
    }
    if (!best || best_count < 2) break;
    const detail::SymbolPair pair = *best;
    const std::string merged = pair.first + pair.second;
    const auto affected = where[pair];
    for (auto w : affected) {
      add_word(w, -1);
      auto& sy = words[w];
      std::vector<std::string> next;
      for (std::size_t i = 0; i < sy.size(); ++i) {
        if (i + 1 < sy.size() && sy[i] == pair.first && sy[i + 1] == pair.second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(sy[i]);
        }
      }
      sy = std::move(next);
      add_word(w, +1);
    }
    for (auto it = counts.begin(); it != counts.end();) {
      if (it->second == 0) {
        where.erase(it->first);
        it = counts.erase(it);
      } else {
        ++it;
      }
    }
    model.merges.push_back(pair);
    model.vocab.insert(merged);
  }
  return model;
}

/// Segments one word into subword pieces (without markers).
inline std::vector<std::string> segment_word(const SubwordModel& model, const std::string& word) {
  std::map<detail::SymbolPair, std::size_t> rank;
  for (std::size_t i = 0; i < model.merges.size(); ++i) rank.emplace(model.merges[i], i);
  std::vector<std::string> sy;
  for (auto& ch : utf8_chars(word))
    sy.push_back(model.alphabet.count(ch) ? ch : std::string(SubwordModel::kUnknown));
  while (sy.size() > 1) {
    std::size_t best_rank = SIZE_MAX;
    for (std::size_t i = 0; i + 1 < sy.size(); ++i) {
      auto it = rank.find({sy[i], sy[i + 1]});
      if (it != rank.end()) best_rank = std::min(best_rank, it->second);
    }
    if (best_rank == SIZE_MAX) break;
    const auto& [l, r] = model.merges[best_rank];
    std::vector<std::string> next;
    for (std::size_t i = 0; i < sy.size(); ++i) {
      if (i + 1 < sy.size() && sy[i] == l && sy[i + 1] == r) {
        next.push_back(l + r);
        ++i;
      } else {
        next.push_back(sy[i]);
      }
    }
    sy = std::move(next);
  }
  return sy;
}

/// Applies merges to every token; control symbols pass through atomically.
class SubwordSegmenter {
 public:
  explicit SubwordSegmenter(const SubwordModel& model) : model_(model) {}

  Sentence apply(const Sentence& s) {
    Sentence out;
    for (const auto& tok : s) {
      if (detail::is_control_symbol(tok)) {
        out.push_back(tok);
        continue;
      }
      auto it = cache_.find(tok);
      if (it == cache_.end()) it = cache_.emplace(tok, segment_word(model_, tok)).first;
      const auto& pieces = it->second;
      for (std::size_t i = 0; i < pieces.size(); ++i)
        out.push_back(i + 1 < pieces.size() ? pieces[i] + model_.marker : pieces[i]);
    }
    return out;
  }

 private:
  const SubwordModel& model_;
  std::unordered_map<std::string, std::vector<std::string>> cache_;
};

inline Sentence apply_subword(const SubwordModel& model, const Sentence& s) {
  return SubwordSegmenter(model).apply(s);
}

inline Sentence decode_subword(const SubwordModel& model, const Sentence& s) {
  Sentence out;
  std::string cur;
  bool open = false;
  const auto& m = model.marker;
  for (const auto& piece : s) {
    if (!detail::is_control_symbol(piece) && piece.size() > m.size() &&
        piece.compare(piece.size() - m.size(), m.size(), m) == 0) {
      cur += piece.substr(0, piece.size() - m.size());
      open = true;
    } else {
      cur += piece;
      out.push_back(std::move(cur));
      cur.clear();
      open = false;
    }
  }
  if (open) out.push_back(std::move(cur));
  return out;
}

// Model file: line 1 is the marker, then one `left right` merge per line.
// The base alphabet goes to a sidecar `<path>.alphabet` (one character per line).
inline void save_subword(const SubwordModel& model, const Path& path) {
  std::vector<std::string> lines{model.marker};
  for (const auto& [l, r] : model.merges) lines.push_back(l + " " + r);
  write_lines(path, lines);
  write_lines(Path(path.string() + ".alphabet"), {model.alphabet.begin(), model.alphabet.end()});
}

inline SubwordModel load_subword(const Path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error("subword model file is empty: " + path.string());
  SubwordModel model;
  model.marker = lines[0];
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto parts = split_tokens(lines[i]);
    if (parts.size() != 2) throw Error(path.string() + ":" + std::to_string(i + 1) + ": malformed merge");
    model.merges.emplace_back(parts[0], parts[1]);
  }
  const Path alpha(path.string() + ".alphabet");
  if (std::filesystem::exists(alpha)) {
    for (auto& l : read_lines(alpha))
      if (!l.empty()) model.alphabet.insert(l);
  } else {
    for (const auto& [l, r] : model.merges) {
      for (auto& c : utf8_chars(l)) model.alphabet.insert(c);
      for (auto& c : utf8_chars(r)) model.alphabet.insert(c);
    }
  }
  model.vocab = model.alphabet;
  for (const auto& [l, r] : model.merges) model.vocab.insert(l + r);
  return model;
}

}  // namespace lowres_mt
