#pragma once

#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lowres_mt/nmt/checkpoint_io.hpp"
#include "lowres_mt/pipeline/experiment.hpp"
#include "lowres_mt/pipeline/grid_search.hpp"
#include "lowres_mt/pipeline/pivot.hpp"
#include "lowres_mt/selection.hpp"

namespace lowres_mt::pipeline {

inline std::string corpus_hash(const ParallelCorpus& c) {
  std::string buf = c.src_lang + "\n" + c.tgt_lang + "\n";
  for (const auto& [s, t] : c.pairs) buf += join_tokens(s) + "\t" + join_tokens(t) + "\n";
  return sha256_hex(buf);
}

inline std::string corpus_hash(const MonolingualCorpus& c) {
  std::string buf = c.lang + "\n";
  for (const auto& s : c.sentences) buf += join_tokens(s) + "\n";
  return sha256_hex(buf);
}

/// Corpus oriented as direction "x-y".
inline ParallelCorpus oriented(const ParallelCorpus& c, const std::string& dir) {
  if (c.direction() == dir) return c;
  if (c.reversed().direction() == dir) return c.reversed();
  throw Error("corpus " + c.direction() + " cannot serve direction " + dir);
}

struct StageOutcome {
  std::string model_id;
  std::string report_id;
  std::map<std::string, double> dev_bleu;   // per direction, tuned alpha
  std::map<std::string, double> test_bleu;  // per direction, tuned alpha
  double alpha = 0.0;
};

struct RunnerOptions {
  unsigned threads = 1;
  std::ostream* log = nullptr;
};

/// Executes stages and back-translation rounds of one experiment against an
/// artifact store. The vocabulary is built once from the configured
/// in-domain corpora and shared by every model.
class Experiment {
 public:
  Experiment(ExperimentConfig cfg, ArtifactStore& store, RunnerOptions opt = {})
      : cfg_(std::move(cfg)), store_(store), opt_(opt) {
    for (const auto& [name, spec] : cfg_.corpora) {
      if (spec.type == "parallel") parallel_[name] = ingest_parallel(spec.src, spec.tgt, {spec.src_lang, spec.tgt_lang});
      else mono_[name] = ingest_monolingual(spec.path, spec.lang, spec.domain);
    }
    std::vector<std::vector<Sentence>> sides;
    for (const auto& n : cfg_.vocab_from) {
      sides.push_back(parallel_.at(n).sources());
      sides.push_back(parallel_.at(n).targets());
    }
    std::vector<const std::vector<Sentence>*> ptrs;
    for (const auto& s : sides) ptrs.push_back(&s);
    vocab_ = nmt::Vocab::build(cfg_.languages, ptrs, cfg_.vocab_max);
    cfg_.model.vocab_size = vocab_.size();
    cfg_.model.validate();
  }

  const ExperimentConfig& config() const { return cfg_; }
  const nmt::Vocab& vocab() const { return vocab_; }
  const ParallelCorpus& parallel(const std::string& name) const {
    auto it = parallel_.find(name);
    if (it == parallel_.end()) throw Error("unknown parallel corpus '" + name + "'");
    return it->second;
  }
  const MonolingualCorpus& monolingual(const std::string& name) const {
    auto it = mono_.find(name);
    if (it == mono_.end()) throw Error("unknown monolingual corpus '" + name + "'");
    return it->second;
  }

  std::shared_ptr<const nmt::NmtModel> load(const std::string& model_id) {
    auto it = cache_.find(model_id);
    if (it != cache_.end()) return it->second;
    const Json m = store_.manifest(model_id);
    if (m.at("kind") != "model") throw Error("artifact " + model_id + " is not a model");
    auto model = std::make_shared<const nmt::NmtModel>(nmt::load_model(store_.dir(model_id) / "model"));
    cache_[model_id] = model;
    return model;
  }

  double model_alpha(const std::string& model_id) const {
    return store_.manifest(model_id).at("summary").at("alpha").get<double>();
  }

  /// Runs every stage in order; returns stage id -> outcome.
  std::map<std::string, StageOutcome> run_multistage() {
    std::map<std::string, StageOutcome> out;
    for (const auto& st : cfg_.stages) out[st.id] = run_stage(st, out);
    return out;
  }

  StageOutcome run_stage(const StageSpec& st, const std::map<std::string, StageOutcome>& done = {}) {
    std::optional<std::string> init_id;
    if (st.init_from) {
      if (auto it = done.find(*st.init_from); it != done.end()) init_id = it->second.model_id;
      else if (store_.contains(*st.init_from)) init_id = *st.init_from;
      else throw Error("stage '" + st.id + "': unresolved init_from '" + *st.init_from + "'");
    }
    std::vector<Source> sources;
    for (const auto& e : st.data) {
      const auto& c = parallel(e.corpus);
      for (const auto& dir : e.directions)
        sources.push_back({e.corpus + ":" + dir, oriented(c, dir), e.domain, corpus_hash(c), {}});
    }
    return train_model(st.id, st.strategy, init_id, sources, st.schedule);
  }

  /// Monolingual sentences of `lang` ranked by in-domain minus general
  /// cross-entropy; in-domain LM from that language's side of the BT
  /// parallel corpora, general LM from the monolingual pool itself.
  std::vector<ScoredSentence> rank_monolingual(const BTConfig& bt, const std::string& lang) {
    auto it = bt.monolingual.find(lang);
    if (it == bt.monolingual.end()) throw Error("back-translation: no monolingual corpus for '" + lang + "'");
    const auto& pool = monolingual(it->second);
    std::vector<Sentence> in_domain;
    for (const auto& n : bt.parallel) {
      const auto& c = parallel(n);
      if (c.src_lang == lang) for (const auto& s : c.sources()) in_domain.push_back(s);
      if (c.tgt_lang == lang) for (const auto& s : c.targets()) in_domain.push_back(s);
    }
    if (in_domain.empty()) throw Error("back-translation: no in-domain text for '" + lang + "'");
    const NGramModel in_lm = train_ngram(in_domain, bt.lm_order);
    const NGramModel gen_lm = train_ngram(pool.sentences, bt.lm_order);
    SelectionConfig sc{pool.size(), &in_lm, &gen_lm};
    return moore_lewis_select(sc, pool);
  }

  /// Directions generated by back-translation and the genuine corpus that
  /// fixes each direction's selection size.
  std::vector<std::pair<std::string, std::string>> bt_directions(const BTConfig& bt) const {
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> wanted(bt.directions.begin(), bt.directions.end());
    for (const auto& n : bt.parallel) {
      const auto& c = parallel(n);
      for (const auto& dir : {c.direction(), c.reversed().direction()})
        if (wanted.empty() || wanted.count(dir)) out.emplace_back(dir, n);
    }
    for (const auto& d : wanted) {
      bool found = false;
      for (const auto& [dir, n] : out) found |= dir == d;
      if (!found) throw Error("back-translation: no parallel corpus covers direction " + d);
    }
    return out;
  }

  /// Pseudo-parallel data for direction x-y: selected monolingual y text
  /// decoded into x by `model_id`, paired as (machine x, original y).
  /// Returns direction -> corpus artifact id.
  std::map<std::string, std::string> back_translate(const std::string& model_id,
                                                    const std::map<std::string, std::string>& selections,
                                                    const std::vector<std::string>& directions, std::size_t beam,
                                                    const std::string& name_prefix) {
    auto model = load(model_id);
    std::map<std::string, std::string> out;
    for (const auto& dir : directions) {
      const auto [x, y] = parse_direction(dir);
      auto sel = selections.find(dir);
      if (sel == selections.end()) throw Error("back-translation: missing selection for direction " + dir);
      const auto sel_dir = store_.dir(sel->second);
      const auto mono = read_sentences(sel_dir / "corpus.txt");
      nmt::DecodeConfig dc;
      dc.beam = beam;
      dc.alpha = model_alpha(model_id);
      NmtTranslator tr(model, y, x, dc);
      Json inputs{{"name", name_prefix + dir}, {"direction", dir}, {"beam", beam}};
      out[dir] = store_.put(ArtifactKind::corpus, inputs, {model_id, sel->second}, [&](const Path& d) {
        log("back-translating " + std::to_string(mono.size()) + " sentences for " + dir);
        const auto machine = tr.translate_all(mono, opt_.threads);
        ParallelCorpus pc{x, y, {}};
        for (std::size_t i = 0; i < mono.size(); ++i) pc.pairs.emplace_back(nonempty_output(machine[i]), mono[i]);
        write_parallel(pc, d / ("corpus." + x), d / ("corpus." + y));
        return Json{{"pairs", pc.size()}, {"src_lang", x}, {"tgt_lang", y}, {"hash", corpus_hash(pc)}};
      });
    }
    return out;
  }

  ParallelCorpus load_pseudo(const std::string& id) const {
    const Json m = store_.manifest(id);
    const auto x = m.at("summary").at("src_lang").get<std::string>();
    const auto y = m.at("summary").at("tgt_lang").get<std::string>();
    return ingest_parallel(store_.dir(id) / ("corpus." + x), store_.dir(id) / ("corpus." + y), {x, y});
  }

  /// Selection artifacts (direction -> id) of the top-T ranked sentences,
  /// T being the size of the genuine corpus of the direction's pair.
  std::map<std::string, std::string> select_for_bt(const BTConfig& bt, std::size_t round) {
    std::map<std::string, std::string> out;
    std::map<std::string, std::vector<ScoredSentence>> ranked;
    for (const auto& [dir, corpus_name] : bt_directions(bt)) {
      const auto [x, y] = parse_direction(dir);
      if (!ranked.count(y)) ranked[y] = rank_monolingual(bt, y);
      const auto& r = ranked[y];
      const std::size_t t = parallel(corpus_name).size();
      Json inputs{{"name", "bt-select:" + dir},
                  {"pool", corpus_hash(monolingual(bt.monolingual.at(y)))},
                  {"in_domain", corpus_name},
                  {"t", t},
                  {"lm_order", bt.lm_order}};
      if (bt.reselect_each_round) inputs["round"] = round;
      for (const auto& n : bt.parallel) inputs["parallel"].push_back(corpus_hash(parallel(n)));
      out[dir] = store_.put(ArtifactKind::corpus, inputs, {}, [&](const Path& d) {
        std::vector<Sentence> sel;
        std::vector<std::string> scores;
        for (std::size_t i = 0; i < std::min(t, r.size()); ++i) {
          sel.push_back(r[i].sentence);
          scores.push_back(std::to_string(r[i].index) + "\t" + format_double(r[i].score, 17));
        }
        if (sel.empty()) throw Error("back-translation: selection for " + dir + " is empty");
        write_sentences(d / "corpus.txt", sel);
        write_lines(d / "scores.tsv", scores);
        return Json{{"sentences", sel.size()}, {"lang", y}};
      });
    }
    return out;
  }

  /// Iterative back-translation from `base_id`; returns the base followed
  /// by one new model per round.
  std::vector<StageOutcome> bt_iterate(const std::string& base_id, const BTConfig& bt) {
    std::vector<StageOutcome> out;
    out.push_back(evaluate_existing(base_id));
    std::map<std::string, std::string> selections;
    std::vector<std::string> dirs;
    for (const auto& [d, n] : bt_directions(bt)) dirs.push_back(d);
    std::string current = base_id;
    for (std::size_t round = 1; round <= bt.rounds; ++round) {
      if (selections.empty() || bt.reselect_each_round) selections = select_for_bt(bt, round);
      const std::string tag = "bt" + std::to_string(round) + ":";
      const auto pseudo = back_translate(current, selections, dirs, bt.beam, tag);
      std::vector<Source> sources;
      for (const auto& n : bt.parallel) {
        const auto& c = parallel(n);
        for (const auto& dir : {c.direction(), c.reversed().direction()})
          sources.push_back({n + ":" + dir, oriented(c, dir), "in", corpus_hash(c), {}});
      }
      for (const auto& [dir, id] : pseudo) sources.push_back({"pseudo:" + dir, load_pseudo(id), "pseudo", id, id});
      const Strategy strat = bt.mode == BtMode::finetune ? Strategy::mixed_fine_tune : Strategy::scratch;
      std::optional<std::string> init;
      if (bt.mode == BtMode::finetune) init = current;
      out.push_back(train_model("bt-round-" + std::to_string(round), strat, init, sources, bt.schedule));
      current = out.back().model_id;
    }
    return out;
  }

  /// Evaluation report for an existing model artifact.
  StageOutcome evaluate_existing(const std::string& model_id) {
    StageOutcome o;
    o.model_id = model_id;
    o.alpha = model_alpha(model_id);
    o.report_id = evaluate(model_id, o);
    return o;
  }

 private:
  struct Source {
    std::string label;
    ParallelCorpus corpus;
    std::string domain;
    std::string hash;
    std::string parent;  // artifact the data came from, if any
  };

  void log(const std::string& msg) const {
    if (opt_.log) *opt_.log << "[pipeline] " << msg << "\n";
  }

  std::vector<MixtureExample> dev_examples(const std::set<std::string>& directions) const {
    std::vector<MixtureExample> out;
    for (const auto& n : cfg_.dev) {
      const auto& c = parallel(n);
      for (const auto& dir : {c.direction(), c.reversed().direction()})
        if (directions.empty() || directions.count(dir))
          for (auto& ex : tagged_examples(oriented(c, dir))) out.push_back(std::move(ex));
    }
    return out;
  }

  std::uint64_t stage_seed(const std::string& name) const {
    return mix_seed(cfg_.seed, std::stoull(sha256_hex(name).substr(0, 15), nullptr, 16));
  }

  StageOutcome train_model(const std::string& name, Strategy strategy, const std::optional<std::string>& init_id,
                           const std::vector<Source>& sources, const Json& schedule_overrides) {
    if (sources.empty()) throw Error("stage '" + name + "': empty mixture");
    const std::uint64_t seed = stage_seed(name);
    const nmt::TrainSchedule sched = make_schedule(cfg_.default_schedule, schedule_overrides, mix_seed(seed, 3));
    std::set<std::string> dirs;
    Json data = Json::array();
    std::vector<std::string> parents;
    if (init_id) parents.push_back(*init_id);
    for (const auto& s : sources) {
      dirs.insert(s.corpus.direction());
      data.push_back(Json{{"label", s.label}, {"direction", s.corpus.direction()}, {"domain", s.domain}, {"hash", s.hash}});
      if (!s.parent.empty()) parents.push_back(s.parent);
    }
    auto dev = dev_examples(dirs);
    if (dev.empty()) dev = dev_examples({});
    Json dev_hashes = Json::array();
    for (const auto& n : cfg_.dev) dev_hashes.push_back(corpus_hash(parallel(n)));
    Json inputs{{"name", name},
                {"strategy", strategy_name(strategy)},
                {"data", data},
                {"schedule", schedule_json(sched)},
                {"model", Json{{"architecture", cfg_.model.architecture_id},
                               {"embed_dim", cfg_.model.embed_dim},
                               {"hidden_dim", cfg_.model.hidden_dim},
                               {"max_decode_len", cfg_.model.max_decode_len}}},
                {"vocab", vocab_.hash()},
                {"seed", seed},
                {"average_last", cfg_.average_last},
                {"alpha_grid", cfg_.decode.alpha_grid},
                {"beam", cfg_.decode.beam},
                {"dev", dev_hashes}};

    const std::string id = store_.put(ArtifactKind::model, inputs, parents, [&](const Path& d) {
      std::vector<DirectedCorpus> directed;
      for (const auto& s : sources) directed.push_back({s.label, s.corpus});
      const TrainingMixture mix = make_mixture(directed, MixStrategy::match_largest, mix_seed(seed, 2));
      const auto examples = nmt::encode_examples(vocab_, mix.examples);
      const auto dev_ids = nmt::encode_dev(vocab_, dev);
      log("stage " + name + ": " + std::to_string(examples.size()) + " examples, " + std::to_string(dev.size()) +
          " dev sentences");
      nmt::TrainOptions topt;
      topt.threads = opt_.threads;
      std::ostream* lg = opt_.log;
      topt.on_checkpoint = [lg, &name](const nmt::Checkpoint& c) {
        if (lg)
          *lg << "[pipeline] stage " << name << " step " << c.step << " dev BLEU " << format_fixed(c.dev_bleu, 2)
              << " loss " << format_fixed(c.dev_loss, 4) << "\n";
      };
      std::vector<nmt::Checkpoint> ckpts;
      if (init_id) {
        auto init = load(*init_id);
        ckpts = nmt::fine_tune(init->binding(), init->checkpoint, cfg_.model, vocab_, examples, dev_ids, sched, topt);
      } else {
        ckpts = nmt::train(cfg_.model, vocab_, nmt::init_model(cfg_.model, mix_seed(seed, 1)), examples, dev_ids,
                           sched, topt);
      }
      const std::size_t best = nmt::best_checkpoint(ckpts);
      nmt::NmtModel model{cfg_.model, vocab_, {ckpts[best].step, nmt::average_to_best(ckpts, cfg_.average_last), 0.0}};
      std::vector<Sentence> dev_src, dev_ref;
      for (const auto& ex : dev) {
        dev_src.push_back(ex.source);
        dev_ref.push_back(ex.target);
      }
      const auto grid = grid_search<double>(cfg_.decode.alpha_grid, [&](const double& a) {
        nmt::DecodeConfig dc{cfg_.decode.beam, a, cfg_.decode.max_len};
        return bleu(nmt::translate_all(model.checkpoint.params, cfg_.model, vocab_, dev_src, dc, opt_.threads), dev_ref)
            .score;
      });
      model.checkpoint.dev_bleu = grid.best_score;
      nmt::save_model(d / "model", model);
      std::vector<std::string> lines{"step\tdev_bleu\tdev_loss"};
      for (const auto& c : ckpts)
        lines.push_back(std::to_string(c.step) + "\t" + format_fixed(c.dev_bleu, 4) + "\t" + format_fixed(c.dev_loss, 6));
      write_lines(d / "checkpoints.tsv", lines);
      std::vector<std::string> alpha_lines{"alpha\tdev_bleu"};
      for (const auto& r : grid.rows)
        alpha_lines.push_back(format_double(r.value) + "\t" + (r.score ? format_fixed(*r.score, 4) : "error: " + r.error));
      write_lines(d / "alpha.tsv", alpha_lines);
      Json counts = mix.direction_counts;
      return Json{{"alpha", grid.best},
                  {"dev_bleu", grid.best_score},
                  {"checkpoints", ckpts.size()},
                  {"final_step", ckpts.back().step},
                  {"best_step", ckpts[best].step},
                  {"mixture", counts},
                  {"mixture_size", mix.size()}};
    });
    StageOutcome o;
    o.model_id = id;
    o.alpha = model_alpha(id);
    o.report_id = evaluate(id, o);
    return o;
  }

  /// Per-direction BLEU on every dev and test corpus the model covers.
  std::string evaluate(const std::string& model_id, StageOutcome& o) {
    auto model = load(model_id);
    const double alpha = model_alpha(model_id);
    Json inputs{{"name", "eval"}, {"beam", cfg_.decode.beam}, {"alpha", alpha}, {"max_len", cfg_.decode.max_len}};
    for (const auto& n : cfg_.dev) inputs["dev"].push_back(corpus_hash(parallel(n)));
    for (const auto& n : cfg_.eval) inputs["test"].push_back(corpus_hash(parallel(n)));
    const std::string id = store_.put(ArtifactKind::report, inputs, {model_id}, [&](const Path& d) {
      Json summary{{"dev", Json::object()}, {"test", Json::object()}};
      nmt::DecodeConfig dc{cfg_.decode.beam, alpha, cfg_.decode.max_len};
      auto run = [&](const std::vector<std::string>& names, const std::string& split) {
        std::map<std::string, std::pair<std::vector<Sentence>, std::vector<Sentence>>> by_dir;
        for (const auto& n : names) {
          const auto& c = parallel(n);
          for (const auto& dir : {c.direction(), c.reversed().direction()}) {
            auto& [src, ref] = by_dir[dir];
            for (const auto& [s, t] : oriented(c, dir).pairs) {
              src.push_back(tag_source(s, parse_direction(dir).second));
              ref.push_back(t);
            }
          }
        }
        for (const auto& [dir, sr] : by_dir) {
          const auto hyps = nmt::translate_all(model->checkpoint.params, model->config, model->vocab, sr.first, dc,
                                               opt_.threads);
          write_sentences(d / (split + "." + dir + ".hyp"), hyps);
          summary[split][dir] = bleu(hyps, sr.second).score;
        }
      };
      run(cfg_.dev, "dev");
      run(cfg_.eval, "test");
      return summary;
    });
    const Json s = store_.manifest(id).at("summary");
    for (const auto& [dir, v] : s.at("dev").items()) o.dev_bleu[dir] = v.get<double>();
    for (const auto& [dir, v] : s.at("test").items()) o.test_bleu[dir] = v.get<double>();
    return id;
  }

  ExperimentConfig cfg_;
  ArtifactStore& store_;
  RunnerOptions opt_;
  nmt::Vocab vocab_;
  std::map<std::string, ParallelCorpus> parallel_;
  std::map<std::string, MonolingualCorpus> mono_;
  std::map<std::string, std::shared_ptr<const nmt::NmtModel>> cache_;
};

}  // namespace lowres_mt::pipeline
