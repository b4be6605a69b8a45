#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowres_mt/corpus.hpp"

namespace lowres_mt::toy {

/// Synthetic three-language world: two languages with little direct data
/// (la, lb) and a pivot (lp). All three express the same concepts with
/// their own word forms and slightly different word orders. The two
/// domains use the same lexicon with different concept frequencies.
struct ToyConfig {
  std::uint64_t seed = 1;
  std::size_t nouns = 96, verbs = 16, adjectives = 12;
  double zipf = 1.1;
  std::size_t ab_in = 100;    // low-resource pair, in-domain
  std::size_t ap_in = 200;
  std::size_t bp_in = 300;
  std::size_t ap_out = 4000;
  std::size_t bp_out = 4000;
  std::size_t mono_in = 1500;   // per language
  std::size_t mono_out = 1500;  // per language, mixed into the same pool
  std::size_t dev = 100;        // per pair
  std::size_t test = 100;       // per pair
};

enum class Pos { noun, verb, adj };

struct Concept {
  Pos pos;
  std::array<std::string, 3> form;  // la, lb, lp
};

inline const std::array<std::string, 3> kToyLanguages = {"la", "lb", "lp"};

class ToyWorld {
 public:
  explicit ToyWorld(const ToyConfig& cfg) : cfg_(cfg), rng_(mix_seed(cfg.seed, 0x70a)) {
    const std::array<std::pair<std::string, std::string>, 3> phon = {
        std::pair{std::string("ptkmnl"), std::string("aiu")}, std::pair{std::string("bdgszr"), std::string("eoa")},
        std::pair{std::string("fhvwjc"), std::string("iyo")}};
    std::array<std::set<std::string>, 3> used;
    auto word = [&](std::size_t lang) {
      for (;;) {
        std::string w;
        const std::size_t syl = 2 + uniform_index(rng_, 2);
        for (std::size_t s = 0; s < syl; ++s) {
          w += phon[lang].first[uniform_index(rng_, phon[lang].first.size())];
          w += phon[lang].second[uniform_index(rng_, phon[lang].second.size())];
        }
        if (used[lang].insert(w).second) return w;
      }
    };
    auto add = [&](Pos p, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) concepts_.push_back({p, {word(0), word(1), word(2)}});
    };
    add(Pos::noun, cfg.nouns);
    add(Pos::verb, cfg.verbs);
    add(Pos::adj, cfg.adjectives);
    for (std::size_t i = 0; i < concepts_.size(); ++i) by_pos_[static_cast<int>(concepts_[i].pos)].push_back(i);
    for (int d = 0; d < 2; ++d)
      for (int p = 0; p < 3; ++p) {
        auto perm = by_pos_[p];
        deterministic_shuffle(perm, rng_);
        order_[d][p] = perm;
      }
  }

  /// A sentence as concept slots: subject, verb, object, optional adjectives.
  struct Meaning {
    std::size_t subj, verb, obj;
    std::optional<std::size_t> subj_adj, obj_adj;
  };

  Meaning sample(int domain) {
    Meaning m{pick(domain, Pos::noun), pick(domain, Pos::verb), pick(domain, Pos::noun), {}, {}};
    if (uniform_real(rng_) < 0.4) m.subj_adj = pick(domain, Pos::adj);
    if (uniform_real(rng_) < 0.4) m.obj_adj = pick(domain, Pos::adj);
    return m;
  }

  /// la: adj noun, subject-verb-object. lb: noun adj, subject-object-verb.
  /// lp: adj noun, subject-verb-object with a particle before the object.
  Sentence realize(const Meaning& m, std::size_t lang) const {
    auto f = [&](std::size_t c) { return concepts_[c].form[lang]; };
    auto np = [&](std::size_t n, const std::optional<std::size_t>& a) {
      Sentence s;
      if (lang == 1) {
        s.push_back(f(n));
        if (a) s.push_back(f(*a));
      } else {
        if (a) s.push_back(f(*a));
        s.push_back(f(n));
      }
      return s;
    };
    Sentence out = np(m.subj, m.subj_adj);
    const Sentence obj = np(m.obj, m.obj_adj);
    if (lang == 1) {
      out.insert(out.end(), obj.begin(), obj.end());
      out.push_back(f(m.verb));
    } else {
      out.push_back(f(m.verb));
      if (lang == 2) out.push_back("wo");
      out.insert(out.end(), obj.begin(), obj.end());
    }
    return out;
  }

  ParallelCorpus parallel(std::size_t a, std::size_t b, std::size_t n, int domain) {
    ParallelCorpus c{kToyLanguages[a], kToyLanguages[b], {}};
    for (std::size_t i = 0; i < n; ++i) {
      const Meaning m = sample(domain);
      c.pairs.emplace_back(realize(m, a), realize(m, b));
    }
    return c;
  }

  MonolingualCorpus monolingual(std::size_t lang, std::size_t n_in, std::size_t n_out) {
    MonolingualCorpus c{kToyLanguages[lang], {}, "mixed"};
    for (std::size_t i = 0; i < n_in + n_out; ++i) c.sentences.push_back(realize(sample(i < n_in ? 0 : 1), lang));
    std::mt19937_64 r(mix_seed(cfg_.seed, 0x5a + lang));
    deterministic_shuffle(c.sentences, r);
    return c;
  }

 private:
  std::size_t pick(int domain, Pos p) {
    const auto& ord = order_[domain][static_cast<int>(p)];
    double total = 0;
    for (std::size_t r = 0; r < ord.size(); ++r) total += 1.0 / std::pow(static_cast<double>(r + 1), cfg_.zipf);
    double u = uniform_real(rng_) * total;
    for (std::size_t r = 0; r < ord.size(); ++r) {
      u -= 1.0 / std::pow(static_cast<double>(r + 1), cfg_.zipf);
      if (u <= 0) return ord[r];
    }
    return ord.back();
  }

  ToyConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<Concept> concepts_;
  std::array<std::vector<std::size_t>, 3> by_pos_;
  std::array<std::array<std::vector<std::size_t>, 3>, 2> order_;
};

/// Writes corpora under `dir` and returns an experiment document covering
/// the in-domain baseline, the three-stage chain, the pair-only and mixed
/// final stages and one back-translation round.
inline nlohmann::json write_toy_experiment(const Path& dir, const ToyConfig& cfg) {
  ToyWorld w(cfg);
  using nlohmann::json;
  json corpora = json::object();
  auto put_parallel = [&](const std::string& name, const ParallelCorpus& c, const std::string& domain) {
    write_parallel(c, dir / (name + "." + c.src_lang), dir / (name + "." + c.tgt_lang));
    corpora[name] = {{"type", "parallel"},
                     {"src", name + "." + c.src_lang},
                     {"tgt", name + "." + c.tgt_lang},
                     {"langs", {c.src_lang, c.tgt_lang}},
                     {"domain", domain}};
  };
  put_parallel("ab_in", w.parallel(0, 1, cfg.ab_in, 0), "in");
  put_parallel("ap_in", w.parallel(0, 2, cfg.ap_in, 0), "in");
  put_parallel("bp_in", w.parallel(1, 2, cfg.bp_in, 0), "in");
  put_parallel("ap_out", w.parallel(0, 2, cfg.ap_out, 1), "out");
  put_parallel("bp_out", w.parallel(1, 2, cfg.bp_out, 1), "out");
  put_parallel("ab_dev", w.parallel(0, 1, cfg.dev, 0), "in");
  put_parallel("ap_dev", w.parallel(0, 2, cfg.dev, 0), "in");
  put_parallel("bp_dev", w.parallel(1, 2, cfg.dev, 0), "in");
  put_parallel("ab_test", w.parallel(0, 1, cfg.test, 0), "in");
  put_parallel("ap_test", w.parallel(0, 2, cfg.test, 0), "in");
  put_parallel("bp_test", w.parallel(1, 2, cfg.test, 0), "in");
  json mono = json::object();
  for (std::size_t l = 0; l < 3; ++l) {
    const auto m = w.monolingual(l, cfg.mono_in, cfg.mono_out);
    const std::string name = "mono_" + kToyLanguages[l];
    write_sentences(dir / (name + ".txt"), m.sentences);
    corpora[name] = {{"type", "monolingual"}, {"path", name + ".txt"}, {"lang", m.lang}, {"domain", "mixed"}};
    mono[m.lang] = name;
  }
  auto entries = [](std::initializer_list<const char*> names) {
    json a = json::array();
    for (const char* n : names) a.push_back({{"corpus", n}, {"directions", "both"}});
    return a;
  };
  json doc = {
      {"seed", cfg.seed},
      {"languages", {"la", "lb", "lp"}},
      {"corpora", corpora},
      {"vocab", {{"from", {"ab_in", "ap_in", "bp_in"}}}},
      {"model", {{"embed_dim", 32}, {"hidden_dim", 32}}},
      {"defaults",
       {{"schedule",
         {{"eval_every", 500}, {"patience", 6}, {"batch_size", 16}, {"learning_rate", 0.003}, {"max_updates", 10000},
          {"optimizer", "adam"}}},
        {"average_last", 3},
        {"decode", {{"beam", 4}, {"alpha_grid", {0.0, 1.0}}}}}},
      {"dev", {"ab_dev", "ap_dev", "bp_dev"}},
      {"eval", {{"test", {"ab_test", "ap_test", "bp_test"}}}},
      {"stages",
       {{{"id", "b3"}, {"strategy", "scratch"}, {"data", entries({"ab_in", "ap_in", "bp_in"})}},
        {{"id", "I"}, {"strategy", "scratch"}, {"data", entries({"ap_out", "bp_out"})}},
        {{"id", "III"},
         {"strategy", "mixed_fine_tune"},
         {"init_from", "I"},
         {"data", entries({"ap_out", "bp_out", "ab_in", "ap_in", "bp_in"})}},
        {{"id", "VII"}, {"strategy", "mixed_fine_tune"}, {"init_from", "III"}, {"data", entries({"ab_in", "ap_in", "bp_in"})}},
        {{"id", "VI"}, {"strategy", "fine_tune"}, {"init_from", "III"}, {"data", entries({"ab_in"})}}}},
      {"bt",
       {{"rounds", 1},
        {"mode", "finetune"},
        {"base", "VII"},
        {"parallel", {"ab_in", "ap_in", "bp_in"}},
        {"monolingual", mono},
        {"selection", {{"lm_order", 3}}},
        {"schedule", {{"learning_rate", 0.001}}},
        {"beam", 4}}}};
  write_file(dir / "experiment.json", doc.dump(2) + "\n");
  return doc;
}

}  // namespace lowres_mt::toy
