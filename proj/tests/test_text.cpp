#include <gtest/gtest.h>

#include <random>

#include "lowres_mt/eval.hpp"
#include "lowres_mt/ngram.hpp"
#include "lowres_mt/selection.hpp"
#include "lowres_mt/subword.hpp"
#include "lowres_mt/toy.hpp"
#include "oracles.hpp"

using namespace lowres_mt;

namespace {

Path scratch(const std::string& name) {
  const Path p = std::filesystem::temp_directory_path() / ("lowres_mt_text_" + std::to_string(::getpid())) / name;
  std::filesystem::create_directories(p.parent_path());
  return p;
}

std::vector<Sentence> toy_sentences(std::size_t lang, std::size_t n, int domain = 0) {
  toy::ToyConfig tc;
  toy::ToyWorld w(tc);
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(w.realize(w.sample(domain), lang));
  return out;
}

}  // namespace

// ---- common ----------------------------------------------------------------

TEST(Common, SplitAndJoinRoundTrip) {
  EXPECT_EQ(split_tokens("  a  b\tc "), (Sentence{"a", "b", "c"}));
  EXPECT_EQ(join_tokens({"a", "b"}), "a b");
  EXPECT_TRUE(split_tokens("   ").empty());
}

TEST(Common, RejectsInvalidUtf8) {
  const auto p = scratch("bad.txt");
  write_file(p, std::string("ok\n\xff\xfe\n"));
  EXPECT_THROW(read_lines(p), Error);
}

TEST(Common, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Common, MixSeedSeparatesStreams) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(7, 3), mix_seed(7, 3));
}

TEST(Common, ParallelForIsIndexStable) {
  std::vector<std::size_t> a(257), b(257);
  parallel_for(a.size(), 1, [&](std::size_t i) { a[i] = i * i; });
  parallel_for(b.size(), 4, [&](std::size_t i) { b[i] = i * i; });
  EXPECT_EQ(a, b);
}

// ---- corpus ----------------------------------------------------------------

TEST(Corpus, IngestChecksLineCounts) {
  const auto s = scratch("c.src"), t = scratch("c.tgt");
  write_lines(s, {"a b", "c"});
  write_lines(t, {"x"});
  EXPECT_THROW(ingest_parallel(s, t, {"aa", "bb"}), Error);
  write_lines(t, {"x", "y z"});
  const auto c = ingest_parallel(s, t, {"aa", "bb"});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.direction(), "aa-bb");
  EXPECT_EQ(c.reversed().pairs[1].first, (Sentence{"y", "z"}));
}

TEST(Corpus, IngestRejectsEmptyLinesAndBadCodes) {
  const auto s = scratch("e.src"), t = scratch("e.tgt");
  write_lines(s, {"a", ""});
  write_lines(t, {"x", "y"});
  EXPECT_THROW(ingest_parallel(s, t, {"aa", "bb"}), Error);
  write_lines(s, {"a", "b"});
  EXPECT_THROW(ingest_parallel(s, t, {"aa", "aa"}), Error);
  EXPECT_THROW(ingest_parallel(s, t, {"A", "bb"}), Error);
}

TEST(Corpus, CleanDropsDuplicatesAndLongPairs) {
  ParallelCorpus c{"aa", "bb", {{{"a"}, {"x"}}, {{"a"}, {"x"}}, {{"a", "b", "c"}, {"y"}}, {{"b"}, {"z"}}}};
  const auto out = clean(c, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.pairs[1].first, (Sentence{"b"}));
}

TEST(Corpus, TagsRoundTrip) {
  EXPECT_EQ(tag_token("ru"), "<2ru>");
  EXPECT_TRUE(is_tag_token("<2ru>"));
  EXPECT_FALSE(is_tag_token("<unk>"));
  const auto s = tag_source({"a", "b"}, "ja");
  EXPECT_EQ(s.front(), "<2ja>");
  EXPECT_EQ(strip_tag(s).first, "ja");
  EXPECT_EQ(strip_tag(s).second, (Sentence{"a", "b"}));
  const std::vector<std::string> known{"en", "ru"};
  EXPECT_THROW(tag_source({"a"}, "ja", known), Error);
}

TEST(Corpus, DirectionParsing) {
  EXPECT_EQ(parse_direction("ja-ru"), std::make_pair(std::string("ja"), std::string("ru")));
  EXPECT_THROW(parse_direction("jaru"), Error);
  EXPECT_THROW(parse_direction("ja-ja"), Error);
}

TEST(Corpus, MatchLargestBalancesDirections) {
  ParallelCorpus big{"aa", "bb", {}}, small{"aa", "cc", {}};
  for (int i = 0; i < 10; ++i) big.pairs.push_back({{"b" + std::to_string(i)}, {"x"}});
  for (int i = 0; i < 3; ++i) small.pairs.push_back({{"s" + std::to_string(i)}, {"y"}});
  const auto mix = make_mixture({{"", big}, {"", small}}, MixStrategy::match_largest, 5);
  EXPECT_EQ(mix.direction_counts.at("aa-bb"), 10u);
  EXPECT_EQ(mix.direction_counts.at("aa-cc"), 10u);
  std::map<std::string, int> reps;
  for (const auto& ex : mix.examples)
    if (ex.direction == "aa-cc") {
      EXPECT_EQ(ex.source.front(), "<2cc>");
      ++reps[ex.source[1]];
    }
  for (const auto& [w, n] : reps) EXPECT_TRUE(n == 3 || n == 4) << w;
  EXPECT_EQ(make_mixture({{"", big}, {"", small}}, MixStrategy::match_largest, 5).examples, mix.examples);
  EXPECT_EQ(make_mixture({{"", big}, {"", small}}, MixStrategy::none, 5).size(), 13u);
}

TEST(Corpus, MixtureFileRoundTrip) {
  ParallelCorpus c{"aa", "bb", {{{"a", "b"}, {"x"}}, {{"c"}, {"y", "z"}}}};
  const auto mix = make_mixture({{"", c}}, MixStrategy::none, 1);
  const auto p = scratch("mix.tsv");
  write_mixture(p, mix);
  EXPECT_EQ(read_mixture(p).examples, mix.examples);
}

// ---- subword ---------------------------------------------------------------

TEST(Subword, ApplyDecodeRoundTrip) {
  const auto sents = toy_sentences(0, 200);
  const auto m = learn_subword({sents}, 60);
  EXPECT_LE(m.vocab_size(), 60u);
  for (const auto& s : sents) {
    const auto seg = apply_subword(m, s);
    EXPECT_EQ(decode_subword(m, seg), s);
  }
}

TEST(Subword, ControlSymbolsStayAtomic) {
  const auto m = learn_subword({{{"lower", "lowest", "low"}}}, 20);
  const auto seg = apply_subword(m, {"<2ru>", "lowest", "<unk>"});
  EXPECT_EQ(seg.front(), "<2ru>");
  EXPECT_EQ(seg.back(), "<unk>");
}

TEST(Subword, SaveLoadKeepsSegmentation) {
  const auto sents = toy_sentences(1, 100);
  const auto m = learn_subword({sents}, 50);
  const auto p = scratch("bpe.model");
  save_subword(m, p);
  const auto m2 = load_subword(p);
  EXPECT_EQ(m2.merges, m.merges);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(apply_subword(m2, sents[i]), apply_subword(m, sents[i]));
}

// ---- n-gram LM ---------------------------------------------------------------

TEST(NGram, MatchesIndependentKneserNey) {
  const auto corpus = toy_sentences(0, 50);
  for (int order : {1, 2, 3}) {
    const auto lm = train_ngram(corpus, order);
    const oracle::KneserNey kn(corpus, order);
    for (const auto& h : lm.contexts()) {
      oracle::KneserNey::Gram gh;
      for (auto id : h) gh.push_back(lm.words()[id]);
      for (auto w : lm.predictable()) EXPECT_NEAR(lm.prob(h, w), kn.prob(gh, lm.words()[w]), 1e-9);
    }
  }
}

TEST(NGram, ConditionalsSumToOne) {
  const auto corpus = toy_sentences(2, 120);
  const auto lm = train_ngram(corpus, 4);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    std::vector<WordId> h;
    for (std::size_t i = 0, n = uniform_index(rng, 5); i < n; ++i)
      h.push_back(static_cast<WordId>(uniform_index(rng, lm.vocab_size())));
    double sum = 0;
    for (auto w : lm.predictable()) sum += lm.prob(h, w);
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(NGram, DiscountFallbackOnThinCounts) {
  const auto d = modified_kn_discounts({3, 0, 1, 1});
  EXPECT_EQ(d.d, (std::array<double, 3>{0.5, 1.0, 1.5}));
  const auto ok = modified_kn_discounts({100, 40, 20, 10});
  const double y = 100.0 / 180.0;
  EXPECT_DOUBLE_EQ(ok.d[0], 1 - 2 * y * 40 / 100);
}

TEST(NGram, SaveLoadPreservesProbabilities) {
  const auto corpus = toy_sentences(0, 80);
  const auto lm = train_ngram(corpus, 3);
  const auto p = scratch("lm.txt");
  save_ngram(lm, p);
  const auto lm2 = load_ngram(p);
  for (const auto& s : toy_sentences(0, 10, 1)) EXPECT_NEAR(lm.cross_entropy(s), lm2.cross_entropy(s), 1e-12);
}

TEST(NGram, RejectsBadOrder) {
  EXPECT_THROW(train_ngram({{"a"}}, 0), Error);
  EXPECT_THROW(train_ngram({{"a"}}, 7), Error);
}

// ---- selection ---------------------------------------------------------------

TEST(Selection, PrefersInDomainAndDropsOov) {
  const auto in = toy_sentences(0, 300, 0), out = toy_sentences(0, 300, 1);
  const auto in_lm = train_ngram(in, 2);
  std::vector<Sentence> general = in;
  general.insert(general.end(), out.begin(), out.end());
  const auto gen_lm = train_ngram(general, 2);
  MonolingualCorpus pool{"la", toy_sentences(0, 5, 0), "mixed"};
  pool.sentences.push_back({"zzz"});
  const auto sel = moore_lewis_select({3, &in_lm, &gen_lm}, pool);
  ASSERT_EQ(sel.size(), 3u);
  for (std::size_t i = 1; i < sel.size(); ++i) EXPECT_LE(sel[i - 1].score, sel[i].score);
  for (const auto& s : sel) EXPECT_NE(s.index, 5u);
  EXPECT_THROW(moore_lewis_select({0, &in_lm, &gen_lm}, pool), Error);
}

TEST(Selection, OovPairFilterNeedsBothSides) {
  const auto lm = train_ngram({{"a", "b"}}, 2);
  ParallelCorpus c{"aa", "bb", {{{"a"}, {"b"}}, {{"q"}, {"b"}}, {{"q"}, {"r"}}}};
  const auto f = filter_oov_pairs(c, lm, lm);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f.pairs[0].second, (Sentence{"r"}));
}

// ---- BLEU ------------------------------------------------------------------

TEST(Bleu, ClippedUnigramPrecision) {
  const auto b = bleu({split_tokens("the the the the the the the")}, {split_tokens("the cat is on the mat")});
  EXPECT_EQ(b.precisions[0], 2.0 / 7.0);
}

TEST(Bleu, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 100; ++k) {
    std::vector<Sentence> h, r;
    for (std::size_t i = 0, n = 1 + uniform_index(rng, 5); i < n; ++i) {
      Sentence a(1 + uniform_index(rng, 9)), b(1 + uniform_index(rng, 9));
      for (auto& t : a) t = std::to_string(uniform_index(rng, 4));
      for (auto& t : b) t = std::to_string(uniform_index(rng, 4));
      h.push_back(a);
      r.push_back(b);
    }
    EXPECT_NEAR(bleu(h, r).score, oracle::bleu(h, r), 1e-9);
  }
}

TEST(Bleu, IdentityIsHundredAndBrevityPenalizes) {
  const std::vector<Sentence> r{{"a", "b", "c", "d", "e"}};
  EXPECT_DOUBLE_EQ(bleu(r, r).score, 100.0);
  const auto short_hyp = bleu({{"a", "b", "c", "d"}}, r);
  EXPECT_NEAR(short_hyp.brevity_penalty, std::exp(1 - 5.0 / 4.0), 1e-15);
  EXPECT_THROW(bleu({}, {}), Error);
  EXPECT_THROW(bleu({{"a"}}, {}), Error);
}

TEST(Bleu, BootstrapIsSeededAndDirectional) {
  std::vector<Sentence> refs, good, bad;
  for (int i = 0; i < 40; ++i) {
    Sentence s{"w" + std::to_string(i), "x", "y" + std::to_string(i % 7), "z"};
    refs.push_back(s);
    good.push_back(s);
    bad.push_back({"w" + std::to_string(i), "q", "q", "z"});
  }
  const auto rep = paired_bootstrap(good, bad, refs, 200, 4);
  EXPECT_LT(rep.p_value, 0.05);
  EXPECT_GT(rep.delta_bleu, 0);
  const auto again = paired_bootstrap(good, bad, refs, 200, 4, 3);
  EXPECT_EQ(rep.p_value, again.p_value);
}
