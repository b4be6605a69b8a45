#include <gtest/gtest.h>

#include <random>

#include "lowres_mt/nmt/checkpoint_io.hpp"
#include "lowres_mt/nmt/grad_check.hpp"
#include "lowres_mt/nmt/train.hpp"
#include "oracles.hpp"

using namespace lowres_mt;
using namespace lowres_mt::nmt;

namespace {

Path scratch(const std::string& name) {
  const Path p = std::filesystem::temp_directory_path() / ("lowres_mt_nmt_" + std::to_string(::getpid())) / name;
  std::filesystem::create_directories(p.parent_path());
  return p;
}

struct Tiny {
  Vocab vocab;
  ModelConfig mc;
  std::vector<MixtureExample> mix;
};

/// Copy and reverse tasks over a six-word alphabet.
Tiny tiny_task() {
  Tiny t;
  std::mt19937_64 rng(2);
  const Sentence words{"a", "b", "c", "d", "e", "f"};
  for (int i = 0; i < 60; ++i) {
    Sentence s(2 + uniform_index(rng, 3));
    for (auto& w : s) w = words[uniform_index(rng, words.size())];
    Sentence r(s.rbegin(), s.rend());
    t.mix.push_back({"xx-yy", tag_source(s, "yy"), s});
    t.mix.push_back({"yy-xx", tag_source(s, "xx"), r});
  }
  std::vector<Sentence> all{words};
  t.vocab = Vocab::build({"xx", "yy"}, {&all});
  t.mc.vocab_size = t.vocab.size();
  t.mc.embed_dim = 12;
  t.mc.hidden_dim = 16;
  return t;
}

}  // namespace

// ---- vocabulary ------------------------------------------------------------

TEST(Vocab, ReservedIdsTagsAndFrequencyOrder) {
  std::vector<Sentence> d{{"b", "a", "a"}, {"c", "a", "b"}};
  const auto v = Vocab::build({"yy", "xx"}, {&d});
  EXPECT_EQ(v.symbols(), (std::vector<std::string>{"<pad>", "<unk>", "<s>", "</s>", "<2xx>", "<2yy>", "a", "b", "c"}));
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
  EXPECT_TRUE(v.is_control(v.id("<2xx>")));
  EXPECT_FALSE(v.is_control(Vocab::kUnk));
  EXPECT_EQ(v.decode({v.id("<2xx>"), v.id("a"), Vocab::kEos}), (Sentence{"a"}));
  EXPECT_EQ(Vocab::from_symbols(v.symbols()), v);
  EXPECT_THROW(Vocab::from_symbols({"a"}), Error);
  const auto capped = Vocab::build({"xx"}, {&d}, 6);
  EXPECT_EQ(capped.size(), 6u);
}

// ---- model -----------------------------------------------------------------

TEST(Model, InitIsSeededAndBounded) {
  auto t = tiny_task();
  const auto a = init_model(t.mc, 3), b = init_model(t.mc, 3), c = init_model(t.mc, 4);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  for (const auto& m : a.t) EXPECT_LE(m.cwiseAbs().maxCoeff(), 0.08);
  std::size_t n = 0;
  for (const auto& m : a.t) n += static_cast<std::size_t>(m.size());
  EXPECT_EQ(n, parameter_count(t.mc));
}

TEST(Model, DecoderStepIsNormalized) {
  auto t = tiny_task();
  const auto p = init_model(t.mc, 1);
  const auto src = t.vocab.encode({"<2yy>", "a", "b"});
  const auto enc = encode(p, src);
  Vector s = enc.initial;
  const Vector lp = decoder_step(p, enc, s, Vocab::kBos);
  EXPECT_NEAR(lp.array().exp().sum(), 1.0, 1e-12);
}

TEST(Model, LossEqualsSummedStepLogProbabilities) {
  auto t = tiny_task();
  const auto p = init_model(t.mc, 5);
  Example ex{t.vocab.encode({"<2yy>", "a", "c"}), t.vocab.encode({"c", "a"})};
  const auto enc = encode(p, ex.source);
  Vector s = enc.initial;
  double lp = 0;
  TokenId prev = Vocab::kBos;
  for (TokenId y : {ex.target[0], ex.target[1], Vocab::kEos}) {
    lp += decoder_step(p, enc, s, prev)(y);
    prev = y;
  }
  EXPECT_NEAR(example_loss(p, ex, nullptr), -lp, 1e-12);
}

TEST(Model, AnalyticGradientsMatchFiniteDifferences) {
  auto t = tiny_task();
  const auto data = encode_examples(t.vocab, t.mix);
  std::vector<const Example*> batch{&data[0], &data[1], &data[7]};
  for (std::uint64_t seed : {1u, 2u}) {
    const auto rep = grad_check(init_model(t.mc, seed), batch, {1e-4, 240, seed, 1e-6});
    EXPECT_EQ(rep.coords.size(), 240u);
    EXPECT_LT(rep.max_rel_error, 1e-4);
  }
}

// ---- decoding --------------------------------------------------------------

TEST(Decode, UnboundedBeamIsExhaustive) {
  std::vector<Sentence> w{{"a", "b", "c"}};
  const auto v = Vocab::build({"xx"}, {&w});
  ModelConfig mc;
  mc.vocab_size = v.size();
  mc.embed_dim = 3;
  mc.hidden_dim = 4;
  std::vector<TokenId> alphabet;
  for (TokenId i = 0; i < static_cast<TokenId>(v.size()); ++i)
    if (!v.is_control(i)) alphabet.push_back(i);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = init_model(mc, seed);
    for (auto& m : p.t) m *= 15.0;
    const std::vector<TokenId> src{v.id("<2xx>"), v.id("b"), v.id("a")};
    for (double alpha : {0.0, 1.0}) {
      const auto got = beam_search(p, mc, v, src, {std::numeric_limits<std::size_t>::max(), alpha, 2});
      const auto want = oracle::exhaustive_decode(p, src, alphabet, Vocab::kEos, 2, alpha);
      EXPECT_EQ(got.tokens, want.tokens);
      EXPECT_NEAR(got.score, want.score, 1e-9);
    }
  }
}

TEST(Decode, LengthPenaltyAndLimits) {
  EXPECT_DOUBLE_EQ(length_penalty(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(length_penalty(7, 1), 2.0);
  auto t = tiny_task();
  const auto p = init_model(t.mc, 1);
  const auto src = t.vocab.encode({"<2yy>", "a"});
  const auto h = beam_search(p, t.mc, t.vocab, src, {3, 0.0, 4});
  EXPECT_LE(h.tokens.size(), 5u);
  EXPECT_EQ(h.tokens.back(), Vocab::kEos);
  EXPECT_THROW(beam_decode(p, t.mc, t.vocab, {"a"}, {}), Error);
  EXPECT_THROW(beam_decode(p, t.mc, t.vocab, {"<2zz>", "a"}, {}), Error);
}

TEST(Decode, BeamOneIsGreedyAndThreadsDoNotMatter) {
  auto t = tiny_task();
  auto p = init_model(t.mc, 9);
  for (auto& m : p.t) m *= 10.0;
  std::vector<Sentence> srcs;
  for (std::size_t i = 0; i < 12; ++i) srcs.push_back(t.mix[i].source);
  const auto g1 = translate_all(p, t.mc, t.vocab, srcs, {1, 0.0, 0}, 1);
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    const auto gh = greedy_decode(p, t.mc, t.vocab, t.vocab.encode(srcs[i]));
    EXPECT_EQ(g1[i], t.vocab.decode(gh.tokens));
  }
  EXPECT_EQ(translate_all(p, t.mc, t.vocab, srcs, {4, 0.5, 0}, 1), translate_all(p, t.mc, t.vocab, srcs, {4, 0.5, 0}, 3));
}

// ---- training --------------------------------------------------------------

TEST(Training, LearnsTinyTaskDeterministically) {
  auto t = tiny_task();
  const auto data = encode_examples(t.vocab, t.mix);
  const auto dev = encode_dev(t.vocab, std::vector<MixtureExample>(t.mix.begin(), t.mix.begin() + 20));
  TrainSchedule s;
  s.eval_every = 400;
  s.patience = 100;
  s.batch_size = 8;
  s.learning_rate = 0.02;
  s.max_updates = 1600;
  s.optimizer = Optimizer::adam;
  std::vector<double> losses;
  TrainOptions o;
  o.loss_log = &losses;
  const auto ck = train(t.mc, t.vocab, init_model(t.mc, 1), data, dev, s, o);
  ASSERT_EQ(ck.size(), 4u);
  EXPECT_EQ(ck.back().step, 1600u);
  double early = 0, late = 0;
  for (int i = 0; i < 50; ++i) {
    early += losses[static_cast<std::size_t>(i)];
    late += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(late, 0.1 * early);
  EXPECT_GT(ck.back().dev_bleu, 80.0);
  const auto again = train(t.mc, t.vocab, init_model(t.mc, 1), data, dev, s);
  EXPECT_TRUE(again.back().params == ck.back().params);
  EXPECT_EQ(again.back().dev_bleu, ck.back().dev_bleu);
}

TEST(Training, EarlyStoppingCountsNonImprovingEvaluations) {
  EarlyStopping e(2);
  EXPECT_FALSE(e.update(1));
  EXPECT_FALSE(e.update(2));
  EXPECT_FALSE(e.update(2));
  EXPECT_TRUE(e.update(1.5));
  EXPECT_EQ(e.best(), 2);

  EarlyStopping flat(2);
  EXPECT_FALSE(flat.update(0, 3.0));
  EXPECT_FALSE(flat.update(0, 2.5));
  EXPECT_FALSE(flat.update(0, 2.9));
  EXPECT_FALSE(flat.update(0, 2.0));
  EXPECT_FALSE(flat.update(0, 2.0));
  EXPECT_TRUE(flat.update(0, 2.1));
}

TEST(Training, DevLossIsMeanTokenNll) {
  auto t = tiny_task();
  const auto p = init_model(t.mc, 4);
  const auto dev = encode_dev(t.vocab, std::vector<MixtureExample>(t.mix.begin(), t.mix.begin() + 6));
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& d : dev) {
    total += example_loss(p, {d.source, t.vocab.encode(d.reference)}, nullptr);
    tokens += d.reference.size() + 1;
  }
  EXPECT_NEAR(dev_loss(p, t.vocab, dev), total / static_cast<double>(tokens), 1e-12);
  EXPECT_EQ(dev_loss(p, t.vocab, dev, 1), dev_loss(p, t.vocab, dev, 3));
}

TEST(Training, FineTuneChecksBindingAndZeroUpdatesKeepsModel) {
  auto t = tiny_task();
  const auto data = encode_examples(t.vocab, t.mix);
  const auto dev = encode_dev(t.vocab, std::vector<MixtureExample>(t.mix.begin(), t.mix.begin() + 4));
  Checkpoint init{10, init_model(t.mc, 2), 0};
  TrainSchedule s;
  s.max_updates = 0;
  const ModelBinding ok{t.mc, t.vocab.hash()};
  const auto out = fine_tune(ok, init, t.mc, t.vocab, data, dev, s);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].params == init.params);
  EXPECT_THROW(fine_tune({t.mc, "other"}, init, t.mc, t.vocab, data, dev, s), Error);
  auto wider = t.mc;
  wider.hidden_dim += 1;
  EXPECT_THROW(fine_tune({wider, t.vocab.hash()}, init, t.mc, t.vocab, data, dev, s), Error);
}

TEST(Training, CheckpointAveraging) {
  auto t = tiny_task();
  const auto a = init_model(t.mc, 1), b = init_model(t.mc, 2);
  EXPECT_TRUE(average_checkpoints({&a, &a, &a}) == a);
  const auto m = average_checkpoints({&a, &b});
  for (std::size_t i = 0; i < kNumParams; ++i) EXPECT_TRUE(m[i].isApprox((a[i] + b[i]) / 2, 1e-14));
  std::vector<Checkpoint> ck{{1, a, 1.0}, {2, b, 5.0}, {3, a, 2.0}};
  EXPECT_TRUE(average_last(ck, 1) == a);
  EXPECT_TRUE(average_to_best(ck, 1) == b);
  EXPECT_TRUE(average_to_best(ck, 10) == m);
  std::vector<Checkpoint> flat{{1, a, 0.0, 3.0}, {2, b, 0.0, 2.0}, {3, a, 0.0, 2.0}};
  EXPECT_EQ(best_checkpoint(flat), 1u);
  EXPECT_TRUE(average_to_best(flat, 1) == b);
}

// ---- checkpoint files ----------------------------------------------------------

TEST(CheckpointIo, RoundTripIsBitExact) {
  auto t = tiny_task();
  NmtModel m{t.mc, t.vocab, {42, init_model(t.mc, 3), 12.5}};
  const auto dir = scratch("ckpt");
  save_model(dir, m);
  const auto back = load_model(dir);
  EXPECT_TRUE(back.checkpoint.params == m.checkpoint.params);
  EXPECT_EQ(back.checkpoint.step, 42u);
  EXPECT_EQ(back.checkpoint.dev_bleu, 12.5);
  EXPECT_EQ(back.vocab, t.vocab);
  EXPECT_TRUE(back.binding() == m.binding());
  write_file(dir / "vocab.txt", "<pad>\n<unk>\n<s>\n</s>\nzz\n");
  EXPECT_THROW(load_model(dir), Error);
}
