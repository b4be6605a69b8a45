#pragma once

#include <cctype>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lowres_mt/common.hpp"

namespace lowres_mt {

using SentencePair = std::pair<Sentence, Sentence>;

struct ParallelCorpus {
  std::string src_lang;
  std::string tgt_lang;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  std::string direction() const { return src_lang + "-" + tgt_lang; }

  ParallelCorpus reversed() const {
    ParallelCorpus out{tgt_lang, src_lang, {}};
    out.pairs.reserve(pairs.size());
    for (const auto& [s, t] : pairs) out.pairs.emplace_back(t, s);
    return out;
  }
  std::vector<Sentence> sources() const {
    std::vector<Sentence> out;
    for (const auto& p : pairs) out.push_back(p.first);
    return out;
  }
  std::vector<Sentence> targets() const {
    std::vector<Sentence> out;
    for (const auto& p : pairs) out.push_back(p.second);
    return out;
  }
};

struct MonolingualCorpus {
  std::string lang;
  std::vector<Sentence> sentences;
  std::string domain_label;

  std::size_t size() const { return sentences.size(); }
};

inline bool valid_language_code(std::string_view code) {
  if (code.empty() || code.size() > 8) return false;
  return std::all_of(code.begin(), code.end(), [](unsigned char c) { return std::islower(c) || std::isdigit(c); });
}

/// "ja-ru" -> {"ja", "ru"}
inline std::pair<std::string, std::string> parse_direction(std::string_view dir) {
  const auto dash = dir.find('-');
  if (dash == std::string_view::npos) throw Error("malformed direction '" + std::string(dir) + "' (expected src-tgt)");
  std::string a(dir.substr(0, dash)), b(dir.substr(dash + 1));
  if (!valid_language_code(a) || !valid_language_code(b) || a == b)
    throw Error("malformed direction '" + std::string(dir) + "'");
  return {a, b};
}

inline void check_sentence(const Sentence& s, const std::string& where) {
  if (s.empty()) throw Error(where + ": empty sentence");
}

inline ParallelCorpus ingest_parallel(const Path& src_path, const Path& tgt_path,
                                      const std::pair<std::string, std::string>& langs) {
  if (!valid_language_code(langs.first) || !valid_language_code(langs.second))
    throw Error("invalid language code");
  if (langs.first == langs.second) throw Error("source and target language must differ");
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.empty()) throw Error("empty file: " + src_path.string());
  if (tgt.empty()) throw Error("empty file: " + tgt_path.string());
  if (src.size() != tgt.size())
    throw Error("line-count mismatch: " + src_path.string() + " has " + std::to_string(src.size()) + " lines, " +
                tgt_path.string() + " has " + std::to_string(tgt.size()));
  ParallelCorpus out{langs.first, langs.second, {}};
  out.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = split_tokens(src[i]);
    auto t = split_tokens(tgt[i]);
    check_sentence(s, src_path.string() + ":" + std::to_string(i + 1));
    check_sentence(t, tgt_path.string() + ":" + std::to_string(i + 1));
    out.pairs.emplace_back(std::move(s), std::move(t));
  }
  return out;
}

inline MonolingualCorpus ingest_monolingual(const Path& path, const std::string& lang, std::string domain = {}) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error("empty file: " + path.string());
  MonolingualCorpus out{lang, {}, std::move(domain)};
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto s = split_tokens(lines[i]);
    check_sentence(s, path.string() + ":" + std::to_string(i + 1));
    out.sentences.push_back(std::move(s));
  }
  return out;
}

inline void write_parallel(const ParallelCorpus& c, const Path& src_path, const Path& tgt_path) {
  write_sentences(src_path, c.sources());
  write_sentences(tgt_path, c.targets());
}

/// Drops exact duplicate pairs (first occurrence wins) and pairs where
/// either side is longer than max_tokens.
inline ParallelCorpus clean(const ParallelCorpus& corpus, std::size_t max_tokens = 100) {
  if (max_tokens < 1) throw Error("max_tokens must be >= 1");
  ParallelCorpus out{corpus.src_lang, corpus.tgt_lang, {}};
  std::set<SentencePair> seen;
  for (const auto& p : corpus.pairs) {
    if (p.first.size() > max_tokens || p.second.size() > max_tokens) continue;
    if (!seen.insert(p).second) continue;
    out.pairs.push_back(p);
  }
  return out;
}

/// Whitespace plus ASCII punctuation splitter for raw toy text.
inline Sentence tokenize_simple(std::string_view line) {
  Sentence out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : line) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur += ch;
    }
  }
  flush();
  return out;
}

struct CorpusStats {
  std::size_t lines = 0;
  std::size_t tokens = 0;
  std::size_t types = 0;
};

inline CorpusStats side_stats(const std::vector<Sentence>& sents) {
  CorpusStats st;
  std::unordered_set<std::string> types;
  st.lines = sents.size();
  for (const auto& s : sents) {
    st.tokens += s.size();
    types.insert(s.begin(), s.end());
  }
  st.types = types.size();
  return st;
}

// ---- language tags -------------------------------------------------------

inline std::string tag_token(std::string_view lang) { return "<2" + std::string(lang) + ">"; }

inline bool is_tag_token(std::string_view tok) {
  return tok.size() >= 4 && tok.substr(0, 2) == "<2" && tok.back() == '>' &&
         valid_language_code(tok.substr(2, tok.size() - 3));
}

inline std::string tag_language(std::string_view tok) {
  if (!is_tag_token(tok)) throw Error("not a language tag: " + std::string(tok));
  return std::string(tok.substr(2, tok.size() - 3));
}

/// Prepends `<2lang>`. When `known` is non-empty the language must be in it.
inline Sentence tag_source(const Sentence& s, const std::string& target_lang,
                           std::span<const std::string> known = {}) {
  if (!valid_language_code(target_lang)) throw Error("invalid language code '" + target_lang + "'");
  if (!known.empty() && std::find(known.begin(), known.end(), target_lang) == known.end())
    throw Error("unknown language code '" + target_lang + "'");
  Sentence out;
  out.reserve(s.size() + 1);
  out.push_back(tag_token(target_lang));
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

/// Returns (target language, untagged sentence).
inline std::pair<std::string, Sentence> strip_tag(const Sentence& s) {
  if (s.empty() || !is_tag_token(s.front())) throw Error("sentence does not start with a language tag");
  return {tag_language(s.front()), Sentence(s.begin() + 1, s.end())};
}

// ---- training mixtures ---------------------------------------------------

enum class MixStrategy { none, match_largest };

struct DirectedCorpus {
  std::string label;  // defaults to the corpus direction when empty
  ParallelCorpus corpus;
};

struct MixtureExample {
  std::string direction;
  Sentence source;  // tagged
  Sentence target;

  bool operator==(const MixtureExample&) const = default;
};

struct TrainingMixture {
  std::vector<MixtureExample> examples;
  std::map<std::string, std::size_t> direction_counts;

  std::size_t size() const { return examples.size(); }
};

/// Tags and mixes directed corpora. Under match_largest every entry is
/// replicated floor(max/size) whole times plus a seeded sample without
/// replacement of the remainder, then the whole mixture is shuffled.
inline TrainingMixture make_mixture(const std::vector<DirectedCorpus>& directed, MixStrategy strategy,
                                    std::uint64_t seed) {
  if (directed.empty()) throw Error("make_mixture: no corpora");
  std::size_t largest = 0;
  for (const auto& d : directed) {
    if (strategy == MixStrategy::match_largest && d.corpus.empty())
      throw Error("make_mixture: empty corpus '" + (d.label.empty() ? d.corpus.direction() : d.label) +
                  "' under match_largest");
    largest = std::max(largest, d.corpus.size());
  }
  TrainingMixture mix;
  for (std::size_t e = 0; e < directed.size(); ++e) {
    const auto& d = directed[e];
    const std::string label = d.label.empty() ? d.corpus.direction() : d.label;
    const std::string dir = d.corpus.direction();
    std::vector<std::size_t> idx;
    if (strategy == MixStrategy::none || d.corpus.empty()) {
      for (std::size_t i = 0; i < d.corpus.size(); ++i) idx.push_back(i);
    } else {
      const std::size_t n = d.corpus.size();
      for (std::size_t r = 0; r < largest / n; ++r)
        for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      std::mt19937_64 rng(mix_seed(seed, e));
      const std::size_t rem = largest % n;
      for (std::size_t i = 0; i < rem; ++i) std::swap(perm[i], perm[i + uniform_index(rng, n - i)]);
      std::sort(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(rem));
      idx.insert(idx.end(), perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(rem));
    }
    for (auto i : idx) {
      const auto& [s, t] = d.corpus.pairs[i];
      mix.examples.push_back({dir, tag_source(s, d.corpus.tgt_lang), t});
    }
    mix.direction_counts[label] += idx.size();
  }
  if (strategy == MixStrategy::match_largest) {
    std::mt19937_64 rng(mix_seed(seed, 0xfeedULL));
    deterministic_shuffle(mix.examples, rng);
  }
  return mix;
}

inline void write_mixture(const Path& path, const TrainingMixture& mix) {
  std::string buf;
  for (const auto& ex : mix.examples) {
    buf += ex.direction;
    buf += '\t';
    buf += join_tokens(ex.source);
    buf += '\t';
    buf += join_tokens(ex.target);
    buf += '\n';
  }
  write_file(path, buf);
}

inline TrainingMixture read_mixture(const Path& path) {
  TrainingMixture mix;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected direction<TAB>source<TAB>target");
    MixtureExample ex{line.substr(0, t1), split_tokens(line.substr(t1 + 1, t2 - t1 - 1)),
                      split_tokens(line.substr(t2 + 1))};
    if (ex.source.empty() || !is_tag_token(ex.source.front()))
      throw Error(path.string() + ":" + std::to_string(lineno) + ": source is not tagged");
    check_sentence(ex.target, path.string() + ":" + std::to_string(lineno));
    mix.direction_counts[ex.direction] += 1;
    mix.examples.push_back(std::move(ex));
  }
  return mix;
}

/// Untagged dev/test sets keyed by direction become tagged examples.
inline std::vector<MixtureExample> tagged_examples(const ParallelCorpus& c) {
  std::vector<MixtureExample> out;
  for (const auto& [s, t] : c.pairs) out.push_back({c.direction(), tag_source(s, c.tgt_lang), t});
  return out;
}

}  // namespace lowres_mt
