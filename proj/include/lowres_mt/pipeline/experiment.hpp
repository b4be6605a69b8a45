#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lowres_mt/corpus.hpp"
#include "lowres_mt/nmt/train.hpp"
#include "lowres_mt/pipeline/store.hpp"

namespace lowres_mt::pipeline {

struct CorpusSpec {
  std::string name;
  std::string type;    // parallel | monolingual
  std::string domain;  // in | out | pseudo | free-form
  Path src, tgt;       // parallel
  Path path;           // monolingual
  std::string src_lang, tgt_lang, lang;
};

/// One corpus used in a stage, in the listed directions ("la-lb").
struct DataEntry {
  std::string corpus;
  std::vector<std::string> directions;
  std::string domain;  // defaults to the corpus domain
};

enum class Strategy { scratch, fine_tune, mixed_fine_tune };

inline Strategy parse_strategy(const std::string& s) {
  if (s == "scratch") return Strategy::scratch;
  if (s == "fine_tune") return Strategy::fine_tune;
  if (s == "mixed_fine_tune") return Strategy::mixed_fine_tune;
  throw Error("unknown stage strategy '" + s + "' (expected scratch, fine_tune or mixed_fine_tune)");
}

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::scratch: return "scratch";
    case Strategy::fine_tune: return "fine_tune";
    case Strategy::mixed_fine_tune: return "mixed_fine_tune";
  }
  return "?";
}

struct StageSpec {
  std::string id;
  std::optional<std::string> init_from;  // stage id of this experiment or artifact id
  Strategy strategy = Strategy::scratch;
  std::vector<DataEntry> data;
  Json schedule;  // overrides of the experiment default schedule
};

struct DecodeSettings {
  std::size_t beam = 4;
  std::vector<double> alpha_grid;
  std::size_t max_len = 0;
};

enum class BtMode { scratch, finetune };

struct BTConfig {
  std::size_t rounds = 5;
  BtMode mode = BtMode::finetune;
  std::string base;                            // stage id or artifact id
  std::vector<std::string> parallel;           // genuine in-domain corpora mixed into every round
  std::map<std::string, std::string> monolingual;  // language -> monolingual corpus name
  std::vector<std::string> directions;         // empty: both directions of every parallel corpus
  int lm_order = 3;
  bool reselect_each_round = false;
  Json schedule;
  std::size_t beam = 1;                        // decoding the monolingual side
};

struct ExperimentConfig {
  std::vector<std::string> languages;
  std::map<std::string, CorpusSpec> corpora;
  std::vector<std::string> vocab_from;
  std::size_t vocab_max = 0;
  nmt::ModelConfig model;
  Json default_schedule = Json::object();
  std::size_t average_last = 10;
  DecodeSettings decode;
  std::vector<std::string> dev;
  std::vector<std::string> eval;
  std::vector<StageSpec> stages;
  std::optional<BTConfig> bt;
  std::uint64_t seed = 1;
};

inline std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(i / 10.0);
  return g;
}

inline Json default_schedule_json() {
  return Json{{"eval_every", 1000}, {"patience", 10},   {"batch_size", 32}, {"learning_rate", 0.1},
              {"max_updates", 100000}, {"optimizer", "sgd"}, {"clip_norm", 5.0}};
}

/// Schedule from defaults, then experiment defaults, then stage overrides.
inline nmt::TrainSchedule make_schedule(const Json& base, const Json& overrides, std::uint64_t seed) {
  Json j = default_schedule_json();
  j.merge_patch(base);
  j.merge_patch(overrides);
  nmt::TrainSchedule s;
  try {
    s.eval_every = j.at("eval_every").get<std::size_t>();
    s.patience = j.at("patience").get<std::size_t>();
    s.batch_size = j.at("batch_size").get<std::size_t>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.max_updates = j.at("max_updates").get<std::size_t>();
    s.clip_norm = j.at("clip_norm").get<double>();
    const auto opt = j.at("optimizer").get<std::string>();
    if (opt == "sgd") s.optimizer = nmt::Optimizer::sgd;
    else if (opt == "adam") s.optimizer = nmt::Optimizer::adam;
    else throw Error("unknown optimizer '" + opt + "'");
    s.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : seed;
  } catch (const Json::exception& e) {
    throw Error(std::string("schedule: ") + e.what());
  }
  s.validate();
  return s;
}

inline Json schedule_json(const nmt::TrainSchedule& s) {
  return Json{{"eval_every", s.eval_every}, {"patience", s.patience}, {"batch_size", s.batch_size},
              {"learning_rate", s.learning_rate}, {"max_updates", s.max_updates},
              {"optimizer", s.optimizer == nmt::Optimizer::adam ? "adam" : "sgd"}, {"clip_norm", s.clip_norm},
              {"seed", s.seed}};
}

namespace detail {

inline std::vector<std::string> direction_list(const Json& j, const CorpusSpec& c) {
  const std::string fwd = c.src_lang + "-" + c.tgt_lang, bwd = c.tgt_lang + "-" + c.src_lang;
  if (!j.is_array()) {
    const auto s = j.get<std::string>();
    if (s == "both") return {fwd, bwd};
    if (s == "forward") return {fwd};
    if (s == "backward") return {bwd};
    return {s};
  }
  return j.get<std::vector<std::string>>();
}

}  // namespace detail

/// Parses and validates an experiment document. Relative corpus paths are
/// resolved against `base_dir`.
inline ExperimentConfig parse_experiment(const Json& j, const Path& base_dir = {}) {
  ExperimentConfig cfg;
  try {
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.languages = j.at("languages").get<std::vector<std::string>>();
    for (const auto& l : cfg.languages)
      if (!valid_language_code(l)) throw Error("invalid language code '" + l + "'");
    const std::set<std::string> langs(cfg.languages.begin(), cfg.languages.end());
    auto resolve = [&](const std::string& p) { return Path(p).is_absolute() ? Path(p) : base_dir / p; };
    for (const auto& [name, c] : j.at("corpora").items()) {
      CorpusSpec spec;
      spec.name = name;
      spec.type = c.value("type", std::string("parallel"));
      spec.domain = c.value("domain", std::string("in"));
      if (spec.type == "parallel") {
        spec.src = resolve(c.at("src").get<std::string>());
        spec.tgt = resolve(c.at("tgt").get<std::string>());
        const auto l = c.at("langs").get<std::vector<std::string>>();
        if (l.size() != 2) throw Error("corpus '" + name + "': langs must list two languages");
        spec.src_lang = l[0];
        spec.tgt_lang = l[1];
        if (!langs.count(spec.src_lang) || !langs.count(spec.tgt_lang) || spec.src_lang == spec.tgt_lang)
          throw Error("corpus '" + name + "': languages must be two distinct experiment languages");
      } else if (spec.type == "monolingual") {
        spec.path = resolve(c.at("path").get<std::string>());
        spec.lang = c.at("lang").get<std::string>();
        if (!langs.count(spec.lang)) throw Error("corpus '" + name + "': unknown language '" + spec.lang + "'");
      } else {
        throw Error("corpus '" + name + "': unknown type '" + spec.type + "'");
      }
      cfg.corpora[name] = spec;
    }
    auto need_parallel = [&](const std::string& n, const std::string& where) -> const CorpusSpec& {
      auto it = cfg.corpora.find(n);
      if (it == cfg.corpora.end()) throw Error(where + ": unknown corpus '" + n + "'");
      if (it->second.type != "parallel") throw Error(where + ": corpus '" + n + "' is not parallel");
      return it->second;
    };

    if (j.contains("vocab")) {
      cfg.vocab_from = j.at("vocab").value("from", std::vector<std::string>{});
      cfg.vocab_max = j.at("vocab").value("max_size", std::size_t{0});
    }
    if (cfg.vocab_from.empty())
      for (const auto& [n, c] : cfg.corpora)
        if (c.type == "parallel" && c.domain == "in") cfg.vocab_from.push_back(n);
    if (cfg.vocab_from.empty()) throw Error("vocab: no in-domain parallel corpus to build the vocabulary from");
    for (const auto& n : cfg.vocab_from) need_parallel(n, "vocab");

    if (j.contains("model")) {
      const auto& m = j.at("model");
      cfg.model.embed_dim = m.value("embed_dim", cfg.model.embed_dim);
      cfg.model.hidden_dim = m.value("hidden_dim", cfg.model.hidden_dim);
      cfg.model.max_decode_len = m.value("max_decode_len", cfg.model.max_decode_len);
    }
    cfg.decode.alpha_grid = default_alpha_grid();
    if (j.contains("defaults")) {
      const auto& d = j.at("defaults");
      if (d.contains("schedule")) cfg.default_schedule = d.at("schedule");
      cfg.average_last = d.value("average_last", cfg.average_last);
      if (d.contains("decode")) {
        const auto& dc = d.at("decode");
        cfg.decode.beam = dc.value("beam", cfg.decode.beam);
        cfg.decode.max_len = dc.value("max_len", cfg.decode.max_len);
        if (dc.contains("alpha_grid")) cfg.decode.alpha_grid = dc.at("alpha_grid").get<std::vector<double>>();
      }
    }
    if (cfg.average_last < 1) throw Error("defaults.average_last must be >= 1");
    if (cfg.decode.beam < 1) throw Error("defaults.decode.beam must be >= 1");
    if (cfg.decode.alpha_grid.empty()) throw Error("defaults.decode.alpha_grid must not be empty");
    for (double a : cfg.decode.alpha_grid)
      if (!(a >= 0)) throw Error("defaults.decode.alpha_grid: alpha must be >= 0");
    make_schedule(cfg.default_schedule, Json::object(), cfg.seed);

    cfg.dev = j.value("dev", std::vector<std::string>{});
    if (cfg.dev.empty()) throw Error("dev: at least one development corpus is required");
    for (const auto& n : cfg.dev) need_parallel(n, "dev");
    if (j.contains("eval")) cfg.eval = j.at("eval").value("test", std::vector<std::string>{});
    for (const auto& n : cfg.eval) need_parallel(n, "eval");

    std::set<std::string> seen;
    for (const auto& s : j.value("stages", Json::array())) {
      StageSpec st;
      st.id = s.at("id").get<std::string>();
      if (st.id.empty() || !seen.insert(st.id).second) throw Error("stage ids must be unique and non-empty");
      if (s.contains("init_from") && !s.at("init_from").is_null()) st.init_from = s.at("init_from").get<std::string>();
      st.strategy = parse_strategy(s.value("strategy", std::string("scratch")));
      st.schedule = s.value("schedule", Json::object());
      const std::string where = "stage '" + st.id + "'";
      for (const auto& d : s.at("data")) {
        DataEntry e;
        e.corpus = d.at("corpus").get<std::string>();
        const auto& c = need_parallel(e.corpus, where);
        e.directions = detail::direction_list(d.value("directions", Json("both")), c);
        e.domain = d.value("domain", c.domain);
        for (const auto& dir : e.directions) {
          const auto [a, b] = parse_direction(dir);
          if (!((a == c.src_lang && b == c.tgt_lang) || (a == c.tgt_lang && b == c.src_lang)))
            throw Error(where + ": direction " + dir + " does not match corpus '" + e.corpus + "'");
        }
        st.data.push_back(std::move(e));
      }
      if (st.data.empty()) throw Error(where + ": no data");
      if (st.strategy == Strategy::scratch && st.init_from)
        throw Error(where + ": strategy scratch cannot have init_from");
      if (st.strategy != Strategy::scratch && !st.init_from)
        throw Error(where + ": strategy " + strategy_name(st.strategy) + " requires init_from");
      if (st.strategy == Strategy::mixed_fine_tune) {
        std::set<std::string> domains, pairs;
        for (const auto& e : st.data) {
          domains.insert(e.domain);
          const auto& c = cfg.corpora.at(e.corpus);
          pairs.insert(std::min(c.src_lang, c.tgt_lang) + "|" + std::max(c.src_lang, c.tgt_lang));
        }
        if (domains.size() < 2 && pairs.size() < 2)
          throw Error(where + ": mixed_fine_tune needs two domains or two language pairs");
      }
      make_schedule(cfg.default_schedule, st.schedule, cfg.seed);
      if (st.init_from && seen.count(*st.init_from) && *st.init_from == st.id)
        throw Error(where + ": stage cannot initialize from itself");
      cfg.stages.push_back(std::move(st));
    }
    // A stage may only initialize from an earlier stage (or a stored artifact).
    std::set<std::string> earlier;
    std::set<std::string> all;
    for (const auto& st : cfg.stages) all.insert(st.id);
    for (const auto& st : cfg.stages) {
      if (st.init_from && all.count(*st.init_from) && !earlier.count(*st.init_from))
        throw Error("stage '" + st.id + "' initializes from later stage '" + *st.init_from + "'");
      earlier.insert(st.id);
    }

    if (j.contains("bt") && !j.at("bt").is_null()) {
      const auto& b = j.at("bt");
      BTConfig bt;
      bt.rounds = b.value("rounds", bt.rounds);
      const auto mode = b.value("mode", std::string("finetune"));
      if (mode == "finetune") bt.mode = BtMode::finetune;
      else if (mode == "scratch") bt.mode = BtMode::scratch;
      else throw Error("bt.mode must be finetune or scratch");
      bt.base = b.value("base", std::string());
      bt.parallel = b.at("parallel").get<std::vector<std::string>>();
      for (const auto& n : bt.parallel) need_parallel(n, "bt.parallel");
      bt.monolingual = b.at("monolingual").get<std::map<std::string, std::string>>();
      for (const auto& [l, n] : bt.monolingual) {
        auto it = cfg.corpora.find(n);
        if (it == cfg.corpora.end() || it->second.type != "monolingual" || it->second.lang != l)
          throw Error("bt.monolingual: '" + n + "' is not a monolingual corpus of language '" + l + "'");
      }
      bt.directions = b.value("directions", std::vector<std::string>{});
      for (const auto& d : bt.directions) {
        const auto [x, y] = parse_direction(d);
        if (!langs.count(x) || !langs.count(y)) throw Error("bt.directions: unknown language in " + d);
      }
      if (b.contains("selection")) {
        bt.lm_order = b.at("selection").value("lm_order", bt.lm_order);
        bt.reselect_each_round = b.at("selection").value("reselect_each_round", false);
      }
      bt.schedule = b.value("schedule", Json::object());
      bt.beam = b.value("beam", bt.beam);
      make_schedule(cfg.default_schedule, bt.schedule, cfg.seed);
      cfg.bt = bt;
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("experiment config: ") + e.what());
  } catch (const Error& e) {
    throw Error(std::string("experiment config: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_experiment(const Path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error("experiment config " + path.string() + ": " + e.what());
  }
  return parse_experiment(j, path.parent_path());
}

}  // namespace lowres_mt::pipeline
