#include <gtest/gtest.h>

#include <random>

#include <Eigen/QR>

#include "lowres_mt/induction.hpp"
#include "lowres_mt/pbsmt_decoder.hpp"
#include "lowres_mt/phrase_table.hpp"
#include "lowres_mt/toy.hpp"
#include "lowres_mt/triangulation.hpp"
#include "oracles.hpp"

using namespace lowres_mt;

namespace {

ParallelCorpus toy_pair(std::size_t a, std::size_t b, std::size_t n, std::uint64_t seed = 1) {
  toy::ToyConfig tc;
  tc.seed = seed;
  toy::ToyWorld w(tc);
  return w.parallel(a, b, n, 0);
}

Path scratch(const std::string& name) {
  const Path p = std::filesystem::temp_directory_path() / ("lowres_mt_smt_" + std::to_string(::getpid())) / name;
  std::filesystem::create_directories(p.parent_path());
  return p;
}

}  // namespace

// ---- alignment -------------------------------------------------------------

TEST(Alignment, Ibm1IsNormalizedAndLearnsToyLexicon) {
  const auto c = toy_pair(0, 2, 400);
  const auto t = train_ibm1(c, 8);
  for (const auto& [cond, row] : t.table) {
    double sum = 0;
    for (const auto& [w, p] : row) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-9) << cond;
  }
  // the pivot particle has no counterpart, everything else is one-to-one
  const auto a = align_pair(t, train_ibm1(c.reversed(), 8), c.pairs[0]);
  EXPECT_FALSE(a.links.empty());
}

TEST(Alignment, GrowDiagFinalContainsIntersectionWithinUnion) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 1 + uniform_index(rng, 6), m = 1 + uniform_index(rng, 6);
    Alignment f, b;
    for (std::size_t j = 0; j < m; ++j) f.links.insert({uniform_index(rng, n), j});
    for (std::size_t i = 0; i < n; ++i) b.links.insert({i, uniform_index(rng, m)});
    const auto g = grow_diag_final(n, m, f, b);
    for (const auto& l : f.links)
      if (b.links.count(l)) EXPECT_TRUE(g.links.count(l));
    for (const auto& l : g.links) EXPECT_TRUE(f.links.count(l) || b.links.count(l));
  }
}

TEST(Alignment, FormatParseRoundTrip) {
  Alignment a;
  a.links = {{0, 1}, {2, 0}, {3, 3}};
  EXPECT_EQ(format_alignment(a), "0-1 2-0 3-3");
  EXPECT_EQ(parse_alignment("0-1 2-0 3-3").links, a.links);
  EXPECT_THROW(parse_alignment("0:1"), Error);
}

// ---- phrase extraction and tables ---------------------------------------

TEST(PhraseExtraction, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 1 + uniform_index(rng, 6), m = 1 + uniform_index(rng, 6);
    SentencePair p{Sentence(n, "s"), Sentence(m, "t")};
    Alignment a;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (uniform_real(rng) < 0.3) a.links.insert({i, j});
    const std::size_t max_len = 1 + uniform_index(rng, 7);
    EXPECT_EQ(extract_phrase_pairs(p, a, max_len), oracle::consistent_boxes(n, m, a.links, max_len));
  }
}

TEST(PhraseExtraction, UnalignedEdgesExtend) {
  SentencePair p{{"a", "b"}, {"x", "y", "z"}};
  Alignment a;
  a.links = {{0, 0}, {1, 2}};
  const auto pairs = extract_phrase_pairs(p, a);
  EXPECT_TRUE(pairs.count({0, 1, 0, 2}));  // a -> x y
  EXPECT_TRUE(pairs.count({1, 2, 1, 3}));  // b -> y z
  EXPECT_FALSE(pairs.count({0, 1, 0, 3}));
}

TEST(PhraseTable, ProbabilitiesAreNormalizedAndRoundTrip) {
  const auto c = toy_pair(0, 1, 150);
  const auto f = train_ibm1(c, 5), b = train_ibm1(c.reversed(), 5);
  std::vector<Alignment> al;
  for (const auto& p : c.pairs) al.push_back(align_pair(f, b, p));
  const auto pt = build_phrase_table(c, al, f, b, 3);
  ASSERT_FALSE(pt.entries.empty());
  std::map<std::string, double> by_src, by_tgt;
  for (const auto& e : pt.entries) {
    by_src[e.src] += e.phi_fwd;
    by_tgt[e.tgt] += e.phi_bwd;
    for (double v : {e.phi_fwd, e.lex_fwd, e.phi_bwd, e.lex_bwd}) {
      EXPECT_GT(v, 0);
      EXPECT_LE(v, 1 + 1e-12);
    }
  }
  for (const auto& [s, v] : by_src) EXPECT_NEAR(v, 1.0, 1e-9) << s;
  for (const auto& [t, v] : by_tgt) EXPECT_NEAR(v, 1.0, 1e-9) << t;
  const auto path = scratch("pt.txt");
  save_phrase_table(pt, path);
  const auto back = load_phrase_table(path, "la", "lb");
  ASSERT_EQ(back.entries.size(), pt.entries.size());
  save_phrase_table(back, scratch("pt2.txt"));
  EXPECT_EQ(read_file(path), read_file(scratch("pt2.txt")));
}

// ---- triangulation -----------------------------------------------------------

TEST(Triangulation, MatchesBruteForceJoin) {
  std::mt19937_64 rng(21);
  auto table = [&](const std::string& a, const std::string& b) {
    PhraseTable t{"", "", {}};
    std::set<std::pair<std::string, std::string>> seen;
    for (int i = 0; i < 40; ++i) {
      std::string s = a + std::to_string(uniform_index(rng, 5)), g = b + std::to_string(uniform_index(rng, 6));
      if (!seen.insert({s, g}).second) continue;
      t.entries.push_back({s, g, uniform_real(rng), uniform_real(rng), uniform_real(rng), uniform_real(rng)});
    }
    return t;
  };
  for (int k = 0; k < 50; ++k) {
    const auto se = table("s", "e"), et = table("e", "t");
    for (std::size_t kk : {1u, 3u, 100u}) {
      const auto got = triangulate(se, et, {kk});
      const auto want = oracle::triangulate(se, et, kk);
      ASSERT_EQ(got.entries.size(), want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(got.entries[i].src, want[i].src);
        EXPECT_EQ(got.entries[i].tgt, want[i].tgt);
        EXPECT_NEAR(got.entries[i].phi_fwd, want[i].phi_fwd, 1e-12);
        EXPECT_NEAR(got.entries[i].lex_bwd, want[i].lex_bwd, 1e-12);
      }
    }
  }
}

TEST(Triangulation, RejectsPivotMismatchAndZeroK) {
  PhraseTable a{"ja", "en", {{"s", "e", 1, 1, 1, 1}}}, b{"de", "ru", {{"e", "t", 1, 1, 1, 1}}};
  EXPECT_THROW(triangulate(a, b, {}), Error);
  b.src_lang = "en";
  EXPECT_THROW(triangulate(a, b, {0}), Error);
  const auto t = triangulate(a, b, {});
  ASSERT_EQ(t.entries.size(), 1u);
  EXPECT_EQ(t.src_lang, "ja");
  EXPECT_EQ(t.tgt_lang, "ru");
}

// ---- significance pruning ----------------------------------------------------

TEST(Pruning, FisherMatchesExactRationals) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 1 + uniform_index(rng, 300), cs = 1 + uniform_index(rng, n), ct = 1 + uniform_index(rng, n);
    const std::size_t lo = std::max<std::size_t>(cs + ct > n ? cs + ct - n : 0, 0), hi = std::min(cs, ct);
    const std::size_t j = lo + uniform_index(rng, hi - lo + 1);
    EXPECT_NEAR(fisher_p_value(j, cs, ct, n), oracle::fisher_p(j, cs, ct, n), 1e-9);
  }
  EXPECT_THROW(fisher_neg_log_p(3, 2, 5, 10), Error);
}

TEST(Pruning, OneOneOneIsPrunedAtAlphaPlusEpsilon) {
  for (std::size_t n : {3u, 40u, 900u}) {
    ParallelCorpus c{"aa", "bb", {{{"u"}, {"v"}}}};
    for (std::size_t i = 1; i < n; ++i) c.pairs.push_back({{"f"}, {"g"}});
    PhraseTable t{"aa", "bb", {{"u", "v", 1, 1, 1, 1}}};
    const auto st = cooccurrence_stats(c, t);
    EXPECT_TRUE(significance_prune(t, st).entries.empty());
    EXPECT_EQ(significance_prune(t, st, {PruneThreshold::Kind::alpha_minus_epsilon, 0}).entries.size(), 1u);
  }
}

TEST(Pruning, CooccurrenceCountsSentences) {
  ParallelCorpus c{"aa", "bb", {{{"a", "a"}, {"x"}}, {{"a"}, {"y"}}, {{"b"}, {"x"}}}};
  PhraseTable t{"aa", "bb", {{"a", "x", 1, 1, 1, 1}}};
  const auto st = cooccurrence_stats(c, t);
  EXPECT_EQ(st.n, 3u);
  EXPECT_EQ(st.src.at("a"), 2u);
  EXPECT_EQ(st.tgt.at("x"), 2u);
  EXPECT_EQ(st.joint.at({"a", "x"}), 1u);
}

// ---- induction -------------------------------------------------------------

TEST(Induction, ProcrustesRecoversRotation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const int d = 20;
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = g(rng);
  const Eigen::MatrixXd r = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  EmbeddingSpace s, t;
  s.dim = t.dim = d;
  std::vector<std::pair<std::string, std::string>> dict;
  for (int k = 0; k < 60; ++k) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = g(rng);
    s.add("s" + std::to_string(k), x);
    t.add("t" + std::to_string(k), r * x);
    if (k < 40) dict.emplace_back("s" + std::to_string(k), "t" + std::to_string(k));
  }
  const auto m = map_embeddings(s, t, dict);
  EXPECT_LT((*m.mapping - r).norm(), 1e-9);
  // held-out words land on their counterparts, and induction ranks them first
  std::vector<Sentence> sp, tp;
  for (int k = 40; k < 60; ++k) {
    sp.push_back({"s" + std::to_string(k)});
    tp.push_back({"t" + std::to_string(k)});
  }
  InductionConfig cfg;
  cfg.n_best = 1;
  const auto table = induce_phrase_table(sp, tp, m, t, LexicalTable{}, LexicalTable{}, cfg);
  ASSERT_EQ(table.entries.size(), 20u);
  for (const auto& e : table.entries) EXPECT_EQ(e.src.substr(1), e.tgt.substr(1));
  dict.resize(5);
  EXPECT_THROW(map_embeddings(s, t, dict), Error);
}

TEST(Induction, SoftmaxIsNormalizedAndSharpens) {
  const std::vector<double> c{0.9, 0.5, 0.1};
  for (double beta : {1.0, 30.0}) {
    const auto p = induction_softmax(c, beta);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
    EXPECT_GT(p[0], p[1]);
  }
  EXPECT_GT(induction_softmax(c, 30)[0], induction_softmax(c, 1)[0]);
}

TEST(Induction, Word2PhraseJoinsCollocations) {
  MonolingualCorpus m{"xx", {}, ""};
  for (int i = 0; i < 200; ++i) m.sentences.push_back({"new", "york", "w" + std::to_string(i % 50)});
  const auto out = word2phrase(m, 1.0, 1.0);
  EXPECT_EQ(out.sentences[0].front(), "new_york");
}

TEST(Induction, EmbeddingsAreSeeded) {
  MonolingualCorpus m{"la", {}, ""};
  toy::ToyConfig tc;
  toy::ToyWorld w(tc);
  for (int i = 0; i < 200; ++i) m.sentences.push_back(w.realize(w.sample(0), 0));
  InductionConfig cfg;
  cfg.dim = 8;
  SkipGramOptions o;
  o.epochs = 1;
  const auto a = train_embeddings(m, cfg, 4, o), b = train_embeddings(m, cfg, 4, o);
  EXPECT_EQ(a.words, b.words);
  EXPECT_TRUE(a.vectors == b.vectors);
}

// ---- phrase-based decoding ---------------------------------------------------

TEST(Pbsmt, TranslatesWithPhrasesAndCopiesUnknowns) {
  PhraseTable t{"aa", "bb", {{"a b", "x", 0.9, 0.9, 0.9, 0.9}, {"a", "y", 0.5, 0.5, 0.5, 0.5}, {"b", "z", 0.5, 0.5, 0.5, 0.5}}};
  const auto lm = train_ngram({{"x", "q"}, {"y", "z"}, {"x"}}, 2);
  EXPECT_EQ(decode_monotone({&t}, lm, {}, {"a", "b", "q"}), (Sentence{"x", "q"}));
  EXPECT_TRUE(decode_monotone({&t}, lm, {}, {}).empty());
}

TEST(Pbsmt, WiderBeamNeverScoresWorse) {
  const auto c = toy_pair(0, 1, 200);
  const auto f = train_ibm1(c, 5), b = train_ibm1(c.reversed(), 5);
  std::vector<Alignment> al;
  for (const auto& p : c.pairs) al.push_back(align_pair(f, b, p));
  const auto pt = build_phrase_table(c, al, f, b, 3);
  const auto lm = train_ngram(c.targets(), 3);
  const PhraseIndex idx({&pt});
  const auto test = toy_pair(0, 1, 10, 2);
  for (const auto& [s, r] : test.pairs) {
    PbsmtOptions narrow, wide;
    narrow.beam = 1;
    wide.beam = 50;
    EXPECT_GE(decode_monotone_scored(idx, lm, {}, s, wide).score, decode_monotone_scored(idx, lm, {}, s, narrow).score - 1e-12);
  }
}
