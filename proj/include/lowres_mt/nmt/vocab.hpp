#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lowres_mt/corpus.hpp"

namespace lowres_mt::nmt {

using TokenId = std::int32_t;

/// Symbol inventory shared by all languages of a model. Ids 0..3 are
/// <pad>, <unk>, <s>, </s>; language tags follow, then words by descending
/// frequency (ties lexicographic).
class Vocab {
 public:
  static constexpr TokenId kPad = 0, kUnk = 1, kBos = 2, kEos = 3;

  Vocab() { reset({}); }

  static Vocab build(const std::vector<std::string>& languages, const std::vector<const std::vector<Sentence>*>& data,
                     std::size_t max_size = 0) {
    Vocab v;
    std::vector<std::string> langs = languages;
    std::sort(langs.begin(), langs.end());
    langs.erase(std::unique(langs.begin(), langs.end()), langs.end());
    std::vector<std::string> syms;
    for (const auto& l : langs) syms.push_back(tag_token(l));
    std::map<std::string, std::size_t> freq;
    for (const auto* d : data)
      for (const auto& s : *d)
        for (const auto& t : s)
          if (!is_tag_token(t) && !is_reserved(t)) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [w, f] : items) {
      if (max_size && syms.size() + 4 >= max_size) break;
      syms.push_back(w);
    }
    v.reset(syms);
    return v;
  }

  static Vocab from_symbols(const std::vector<std::string>& all) {
    if (all.size() < 4 || all[0] != "<pad>" || all[1] != "<unk>" || all[2] != "<s>" || all[3] != "</s>")
      throw Error("vocabulary must start with <pad> <unk> <s> </s>");
    Vocab v;
    v.reset(std::vector<std::string>(all.begin() + 4, all.end()));
    return v;
  }

  static bool is_reserved(const std::string& t) { return t == "<pad>" || t == "<unk>" || t == "<s>" || t == "</s>"; }

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& symbol(TokenId id) const { return symbols_.at(static_cast<std::size_t>(id)); }

  TokenId id(const std::string& s) const {
    auto it = index_.find(s);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& s) const { return index_.count(s) > 0; }

  /// Symbols that are never produced by the decoder.
  bool is_control(TokenId id) const {
    return id == kPad || id == kBos || id == kEos || is_tag_token(symbol(id));
  }

  std::vector<TokenId> encode(const Sentence& s) const {
    std::vector<TokenId> out;
    out.reserve(s.size());
    for (const auto& t : s) out.push_back(id(t));
    return out;
  }

  Sentence decode(const std::vector<TokenId>& ids) const {
    Sentence out;
    for (auto i : ids)
      if (!is_control(i)) out.push_back(symbol(i));
    return out;
  }

  std::string hash() const { return sha256_hex(join_tokens(symbols_, "\n")); }

  bool operator==(const Vocab& o) const { return symbols_ == o.symbols_; }

 private:
  void reset(const std::vector<std::string>& rest) {
    symbols_ = {"<pad>", "<unk>", "<s>", "</s>"};
    symbols_.insert(symbols_.end(), rest.begin(), rest.end());
    index_.clear();
    for (std::size_t i = 0; i < symbols_.size(); ++i) index_.emplace(symbols_[i], static_cast<TokenId>(i));
  }

  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace lowres_mt::nmt
