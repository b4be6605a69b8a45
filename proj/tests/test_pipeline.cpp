#include <gtest/gtest.h>

#include <unistd.h>

#include "lowres_mt/pipeline/grid_search.hpp"
#include "lowres_mt/pipeline/pivot.hpp"
#include "lowres_mt/pipeline/runner.hpp"
#include "lowres_mt/toy.hpp"

using namespace lowres_mt;
using namespace lowres_mt::pipeline;

namespace {

Path fresh_dir(const std::string& name) {
  const Path p = std::filesystem::temp_directory_path() / ("lowres_mt_pipe_" + std::to_string(::getpid())) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

Json minimal_config() {
  return Json::parse(R"({
    "languages": ["la", "lb"],
    "corpora": {
      "train": {"type": "parallel", "src": "t.la", "tgt": "t.lb", "langs": ["la", "lb"]},
      "dev": {"type": "parallel", "src": "d.la", "tgt": "d.lb", "langs": ["la", "lb"]},
      "mono": {"type": "monolingual", "path": "m.la", "lang": "la"}
    },
    "dev": ["dev"],
    "stages": [{"id": "s1", "data": [{"corpus": "train"}]}]
  })");
}

}  // namespace

// ---- artifact store ----------------------------------------------------------

TEST(Store, IdsAreContentAddressedAndIdempotent) {
  ArtifactStore s(fresh_dir("store"));
  int writes = 0;
  auto payload = [&](const Path& d) {
    ++writes;
    write_file(d / "x.txt", "x");
    return Json{{"n", 1}};
  };
  const auto a = s.put(ArtifactKind::corpus, {{"name", "a"}}, {}, payload);
  EXPECT_EQ(s.put(ArtifactKind::corpus, {{"name", "a"}}, {}, payload), a);
  EXPECT_EQ(writes, 1);
  EXPECT_EQ(a, ArtifactStore::make_id(ArtifactKind::corpus, {{"name", "a"}}, {}));
  EXPECT_NE(a, ArtifactStore::make_id(ArtifactKind::table, {{"name", "a"}}, {}));
  const auto b = s.put(ArtifactKind::model, {{"name", "b"}}, {a}, payload);
  const auto c = s.put(ArtifactKind::report, {{"name", "c"}}, {b, a}, payload);
  const auto m = s.manifest(c);
  EXPECT_EQ(m.at("kind"), "report");
  EXPECT_EQ(m.at("parents"), Json({b, a}));
  EXPECT_EQ(s.ancestors(c), (std::vector<std::string>{a, b}));
  const auto text = s.lineage_text(c);
  EXPECT_NE(text.find("  " + b + "  model  b"), std::string::npos);
  EXPECT_NE(text.find("    " + a + "  corpus  a"), std::string::npos);
  EXPECT_THROW(s.put(ArtifactKind::model, {}, {"missing"}, payload), Error);
  EXPECT_THROW(s.manifest("missing"), Error);
}

TEST(Store, EnvironmentOverridesDefaultRoot) {
  ::setenv(kStoreEnv, "/tmp/lowres_env_store", 1);
  EXPECT_EQ(resolve_store_root(), Path("/tmp/lowres_env_store"));
  EXPECT_EQ(resolve_store_root("/x/y"), Path("/x/y"));
  ::unsetenv(kStoreEnv);
}

// ---- grid search -------------------------------------------------------------

TEST(GridSearch, ArgmaxWithTiesToSmallerAndFailuresRecorded) {
  const auto r = grid_search<double>({0.0, 0.5, 1.0, 1.5}, [](const double& a) {
    if (a == 1.5) throw Error("boom");
    return a == 0.0 ? 3.0 : (a == 0.5 ? 4.0 : 4.0);
  });
  EXPECT_EQ(r.best, 0.5);
  EXPECT_EQ(r.best_score, 4.0);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_FALSE(r.rows[3].score.has_value());
  EXPECT_EQ(r.rows[3].error, "boom");
  EXPECT_THROW(grid_search<double>({1.0}, [](const double&) -> double { throw Error("x"); }), Error);
  EXPECT_THROW(grid_search<double>({}, [](const double& a) { return a; }), Error);
}

// ---- experiment configuration -------------------------------------------------------

TEST(ExperimentConfig, ParsesDefaultsAndResolvesPaths) {
  const auto cfg = parse_experiment(minimal_config(), "/data");
  EXPECT_EQ(cfg.corpora.at("train").src, Path("/data/t.la"));
  EXPECT_EQ(cfg.vocab_from, (std::vector<std::string>{"dev", "train"}));
  EXPECT_EQ(cfg.decode.alpha_grid.size(), 21u);
  ASSERT_EQ(cfg.stages.size(), 1u);
  EXPECT_EQ(cfg.stages[0].data[0].directions, (std::vector<std::string>{"la-lb", "lb-la"}));
  EXPECT_FALSE(cfg.bt.has_value());
}

TEST(ExperimentConfig, RejectsInvalidDocuments) {
  auto bad = [](auto edit) {
    Json j = minimal_config();
    edit(j);
    EXPECT_THROW(parse_experiment(j), Error) << j.dump();
  };
  bad([](Json& j) { j["languages"] = {"la", "LB!"}; });
  bad([](Json& j) { j["corpora"]["train"]["langs"] = {"la", "la"}; });
  bad([](Json& j) { j["corpora"]["train"]["type"] = "graph"; });
  bad([](Json& j) { j["dev"] = Json::array(); });
  bad([](Json& j) { j["dev"] = {"mono"}; });
  bad([](Json& j) { j["stages"][0]["strategy"] = "magic"; });
  bad([](Json& j) { j["stages"][0]["init_from"] = "s0"; });
  bad([](Json& j) { j["stages"][0]["strategy"] = "fine_tune"; });
  bad([](Json& j) { j["stages"][0]["data"][0]["directions"] = {"la-lp"}; });
  bad([](Json& j) { j["stages"].push_back(j["stages"][0]); });
  bad([](Json& j) {
    j["stages"].push_back({{"id", "s2"}, {"strategy", "mixed_fine_tune"}, {"init_from", "s1"}, {"data", {{{"corpus", "train"}}}}});
  });
  bad([](Json& j) {
    j["stages"][0] = {{"id", "s0"}, {"strategy", "fine_tune"}, {"init_from", "s2"}, {"data", {{{"corpus", "train"}}}}};
    j["stages"].push_back({{"id", "s2"}, {"data", {{{"corpus", "train"}}}}});
  });
  bad([](Json& j) { j["defaults"] = {{"decode", {{"alpha_grid", {-1.0}}}}}; });
  bad([](Json& j) { j["defaults"] = {{"schedule", {{"patience", 0}}}}; });
  bad([](Json& j) { j["bt"] = {{"parallel", {"train"}}, {"monolingual", {{"lb", "mono"}}}}; });
  bad([](Json& j) { j["bt"] = {{"parallel", {"train"}}, {"monolingual", {{"la", "mono"}}}, {"mode", "both"}}; });
}

// ---- pivoting ------------------------------------------------------------------

TEST(Pivot, CascadeAndSynthesisCheckLanguages) {
  IdentityTranslator ap("la", "lp"), pb("lp", "lb"), pa("lp", "la");
  MonolingualCorpus m{"la", {{"x", "y"}, {"z"}}, "in"};
  const auto out = pivot_cascade(ap, pb, m);
  EXPECT_EQ(out.lang, "lb");
  EXPECT_EQ(out.sentences, m.sentences);
  EXPECT_THROW(pivot_cascade(ap, ap, m), Error);
  EXPECT_THROW(pivot_cascade(pb, pa, m), Error);

  ParallelCorpus bp{"lb", "lp", {{{"b1"}, {"p1"}}, {{"b2"}, {}}}};
  const auto syn = pivot_synthesize(bp, pa);
  EXPECT_EQ(syn.direction(), "la-lb");
  EXPECT_EQ(syn.pairs[0], (SentencePair{{"p1"}, {"b1"}}));
  EXPECT_EQ(syn.pairs[1].first, (Sentence{"<unk>"}));
  EXPECT_THROW(pivot_synthesize(bp, ap), Error);
}

// ---- runner --------------------------------------------------------------------

TEST(Runner, TinyExperimentIsReproducibleAndRecordsLineage) {
  toy::ToyConfig tc;
  tc.ab_in = 40;
  tc.ap_in = 40;
  tc.bp_in = 40;
  tc.ap_out = 40;
  tc.bp_out = 40;
  tc.mono_in = 30;
  tc.mono_out = 30;
  tc.dev = 8;
  tc.test = 8;
  const Path data = fresh_dir("tiny_data");
  Json doc = toy::write_toy_experiment(data, tc);
  doc["model"] = {{"embed_dim", 6}, {"hidden_dim", 6}};
  doc["defaults"]["schedule"]["max_updates"] = 20;
  doc["defaults"]["schedule"]["eval_every"] = 10;
  doc["stages"] = Json::array({doc["stages"][0], doc["stages"][4]});
  doc["stages"][1]["init_from"] = "b3";
  doc["bt"]["base"] = "VI";
  const auto cfg = parse_experiment(doc, data);

  auto run = [&](const Path& root) {
    ArtifactStore store(root);
    Experiment ex(cfg, store, {2, nullptr});
    auto stages = ex.run_multistage();
    const auto bt = ex.bt_iterate(stages.at("VI").model_id, *cfg.bt);
    return std::make_tuple(stages, bt, store.lineage_text(bt.back().model_id));
  };
  const auto [stages, bt, lineage] = run(fresh_dir("tiny_store_a"));
  ASSERT_EQ(stages.size(), 2u);
  EXPECT_EQ(stages.at("b3").test_bleu.size(), 6u);
  ASSERT_EQ(bt.size(), 2u);
  EXPECT_EQ(bt[0].model_id, stages.at("VI").model_id);
  EXPECT_NE(lineage.find(stages.at("b3").model_id), std::string::npos);

  const auto [stages2, bt2, lineage2] = run(fresh_dir("tiny_store_b"));
  EXPECT_EQ(stages2.at("VI").model_id, stages.at("VI").model_id);
  EXPECT_EQ(bt2.back().model_id, bt.back().model_id);
  EXPECT_EQ(stages2.at("b3").test_bleu, stages.at("b3").test_bleu);
  EXPECT_EQ(lineage2, lineage);
}
