#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lowres_mt/alignment.hpp"
#include "lowres_mt/corpus.hpp"
#include "lowres_mt/eval.hpp"
#include "lowres_mt/induction.hpp"
#include "lowres_mt/ngram.hpp"
#include "lowres_mt/nmt/checkpoint_io.hpp"
#include "lowres_mt/nmt/grad_check.hpp"
#include "lowres_mt/pbsmt_decoder.hpp"
#include "lowres_mt/phrase_table.hpp"
#include "lowres_mt/pipeline/runner.hpp"
#include "lowres_mt/selection.hpp"
#include "lowres_mt/subword.hpp"
#include "lowres_mt/toy.hpp"
#include "lowres_mt/triangulation.hpp"

namespace lowres_mt::cli {

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

namespace detail {

inline std::pair<std::string, std::string> langs_of(const std::string& dir) { return parse_direction(dir); }

inline void write_or_print(const std::string& path, const std::vector<Sentence>& sents, std::ostream& out) {
  if (path.empty() || path == "-") {
    for (const auto& s : sents) out << join_tokens(s) << "\n";
  } else {
    write_sentences(path, sents);
  }
}

inline std::vector<std::pair<std::string, std::string>> read_dictionary(const Path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& line : read_lines(path)) {
    const auto t = split_tokens(line);
    if (t.empty()) continue;
    if (t.size() != 2) throw Error(path.string() + ": expected 'source target' per line");
    out.emplace_back(t[0], t[1]);
  }
  return out;
}

/// Checkpoint directories under `dir` named ckpt-<step>, sorted by step.
inline std::vector<Path> checkpoint_dirs(const Path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::pair<std::size_t, Path>> found;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_directory() && name.rfind("ckpt-", 0) == 0) found.emplace_back(std::stoull(name.substr(5)), e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<Path> out;
  for (auto& [s, p] : found) out.push_back(p);
  if (out.empty()) throw Error("no ckpt-* directories in " + dir.string());
  return out;
}

inline std::string ckpt_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt-%08zu", step);
  return buf;
}

struct TrainFlags {
  std::string mixture, dev, out;
  std::size_t embed_dim = 64, hidden_dim = 64;
  std::size_t eval_every = 1000, patience = 10, batch_size = 32, max_updates = 100000, average_last = 10;
  std::size_t vocab_max = 0;
  double lr = 0.1, clip = 5.0;
  std::string optimizer = "sgd";
};

inline void add_train_flags(CLI::App* c, TrainFlags& f, bool with_model_dims) {
  c->add_option("--mixture", f.mixture, "training mixture (direction<TAB>tagged source<TAB>target)")->required();
  c->add_option("--dev", f.dev, "dev set in the same format")->required();
  c->add_option("--out", f.out, "output directory for checkpoints")->required();
  if (with_model_dims) {
    c->add_option("--embed-dim", f.embed_dim, "embedding size")->capture_default_str();
    c->add_option("--hidden-dim", f.hidden_dim, "recurrent state size")->capture_default_str();
    c->add_option("--vocab-max", f.vocab_max, "vocabulary cap (0 = unlimited)")->capture_default_str();
  }
  c->add_option("--eval-every", f.eval_every, "updates between dev evaluations")->capture_default_str();
  c->add_option("--patience", f.patience, "evaluations without improvement before stopping")->capture_default_str();
  c->add_option("--batch-size", f.batch_size, "examples per update")->capture_default_str();
  c->add_option("--lr", f.lr, "learning rate")->capture_default_str();
  c->add_option("--max-updates", f.max_updates, "update cap")->capture_default_str();
  c->add_option("--optimizer", f.optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}))->capture_default_str();
  c->add_option("--clip", f.clip, "gradient norm clip (0 = off)")->capture_default_str();
  c->add_option("--average-last", f.average_last, "also write the mean of the last N checkpoints to <out>/average")
      ->capture_default_str();
}

inline nmt::TrainSchedule schedule_of(const TrainFlags& f, std::uint64_t seed) {
  nmt::TrainSchedule s;
  s.eval_every = f.eval_every;
  s.patience = f.patience;
  s.batch_size = f.batch_size;
  s.learning_rate = f.lr;
  s.max_updates = f.max_updates;
  s.seed = seed;
  s.optimizer = f.optimizer == "adam" ? nmt::Optimizer::adam : nmt::Optimizer::sgd;
  s.clip_norm = f.clip;
  s.validate();
  return s;
}

inline void save_run(const Path& out, const nmt::ModelConfig& mc, const nmt::Vocab& vocab,
                     const std::vector<nmt::Checkpoint>& ckpts, std::size_t average_last, std::ostream& err) {
  for (const auto& c : ckpts) nmt::save_model(out / ckpt_name(c.step), {mc, vocab, c});
  if (average_last > 0) {
    nmt::Checkpoint avg{ckpts.back().step, nmt::average_last(ckpts, average_last), ckpts.back().dev_bleu};
    nmt::save_model(out / "average", {mc, vocab, avg});
  }
  err << "saved " << ckpts.size() << " checkpoints to " << out.string() << "\n";
}

inline nmt::Vocab vocab_from_mixture(const TrainingMixture& mix, std::size_t max_size) {
  std::set<std::string> langs;
  std::vector<Sentence> src, tgt;
  for (const auto& ex : mix.examples) {
    langs.insert(tag_language(ex.source.front()));
    src.emplace_back(ex.source.begin() + 1, ex.source.end());
    tgt.push_back(ex.target);
  }
  return nmt::Vocab::build({langs.begin(), langs.end()}, {&src, &tgt}, max_size);
}

}  // namespace detail

/// Parses argv and runs one subcommand. Returns 0 on success, 1 on a domain
/// error and 2 on a usage error.
inline int run(const std::vector<std::string>& argv, Streams io = {}) {
  CLI::App app{"Low-resource machine translation toolkit", "lowres-mt"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read flags from a TOML/INI file");
  std::uint64_t seed = 1;
  unsigned threads = 1;
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--threads", threads, "worker threads (1 = bytewise deterministic)")->capture_default_str()->check(CLI::PositiveNumber);
  std::function<void()> action;
  auto& out = io.out;
  auto& err = io.err;

  // corpus-prep
  std::string cp_src, cp_tgt, cp_langs, cp_out_src, cp_out_tgt;
  std::size_t cp_max = 100;
  auto* cp = app.add_subcommand("corpus-prep", "ingest, deduplicate and length-filter a parallel corpus");
  cp->add_option("--src", cp_src, "source file")->required();
  cp->add_option("--tgt", cp_tgt, "target file")->required();
  cp->add_option("--langs", cp_langs, "language pair, e.g. ja-ru")->required();
  cp->add_option("--out-src", cp_out_src, "cleaned source output")->required();
  cp->add_option("--out-tgt", cp_out_tgt, "cleaned target output")->required();
  cp->add_option("--max-tokens", cp_max, "drop pairs with a longer side")->capture_default_str()->check(CLI::PositiveNumber);
  cp->callback([&] {
    action = [&] {
      const auto c = ingest_parallel(cp_src, cp_tgt, detail::langs_of(cp_langs));
      const auto cleaned = clean(c, cp_max);
      write_parallel(cleaned, cp_out_src, cp_out_tgt);
      const auto ss = side_stats(cleaned.sources()), ts = side_stats(cleaned.targets());
      err << "pairs: " << c.size() << " -> " << cleaned.size() << "; source tokens " << ss.tokens << " (types "
          << ss.types << "), target tokens " << ts.tokens << " (types " << ts.types << ")\n";
    };
  });

  // subword
  auto* sw = app.add_subcommand("subword", "learn, apply or undo subword segmentation");
  sw->require_subcommand(1);
  std::vector<std::string> sw_inputs;
  std::string sw_model, sw_input, sw_output, sw_marker = "@@";
  std::size_t sw_vocab = 16000;
  auto* swl = sw->add_subcommand("learn", "learn merges from one or more files");
  swl->add_option("--input", sw_inputs, "training files")->required();
  swl->add_option("--vocab", sw_vocab, "target vocabulary size")->capture_default_str();
  swl->add_option("--marker", sw_marker, "continuation marker")->capture_default_str();
  swl->add_option("--out", sw_model, "model file")->required();
  swl->callback([&] {
    action = [&] {
      std::vector<std::vector<Sentence>> corpora;
      for (const auto& f : sw_inputs) corpora.push_back(read_sentences(f));
      const auto m = learn_subword(corpora, sw_vocab, sw_marker);
      save_subword(m, sw_model);
      err << "merges: " << m.merges.size() << ", vocabulary: " << m.vocab_size() << "\n";
    };
  });
  for (const char* mode : {"apply", "decode"}) {
    auto* s = sw->add_subcommand(mode, std::string(mode) == "apply" ? "segment a file" : "join segmented text");
    s->add_option("--model", sw_model, "model file")->required();
    s->add_option("--input", sw_input, "input file")->required();
    s->add_option("--output", sw_output, "output file (default: standard output)");
    const bool apply = std::string(mode) == "apply";
    s->callback([&, apply] {
      action = [&, apply] {
        const auto m = load_subword(sw_model);
        std::vector<Sentence> res;
        SubwordSegmenter seg(m);
        for (const auto& s : read_sentences(sw_input)) res.push_back(apply ? seg.apply(s) : decode_subword(m, s));
        detail::write_or_print(sw_output, res, out);
      };
    });
  }

  // lm-train
  std::string lm_input, lm_out;
  int lm_order = 3;
  auto* lm = app.add_subcommand("lm-train", "train a Kneser-Ney n-gram language model");
  lm->add_option("--input", lm_input, "training text")->required();
  lm->add_option("--order", lm_order, "n-gram order")->capture_default_str()->check(CLI::Range(1, 6));
  lm->add_option("--out", lm_out, "model file")->required();
  lm->callback([&] {
    action = [&] {
      const auto model = train_ngram(read_sentences(lm_input), lm_order);
      save_ngram(model, lm_out);
      err << "order " << model.order() << ", vocabulary " << model.vocab_size() << "\n";
    };
  });

  // select
  std::string sel_pool, sel_in, sel_gen, sel_out, sel_scores;
  std::size_t sel_t = 0;
  auto* sel = app.add_subcommand("select", "cross-entropy difference selection from a monolingual pool");
  sel->add_option("--pool", sel_pool, "candidate sentences")->required();
  sel->add_option("--in-domain-lm", sel_in, "in-domain language model")->required();
  sel->add_option("--general-lm", sel_gen, "general-domain language model")->required();
  sel->add_option("-t,--top", sel_t, "number of sentences to keep")->required()->check(CLI::PositiveNumber);
  sel->add_option("--out", sel_out, "selected sentences (default: standard output)");
  sel->add_option("--scores", sel_scores, "optional index<TAB>score file");
  sel->callback([&] {
    action = [&] {
      const auto in_lm = load_ngram(sel_in), gen_lm = load_ngram(sel_gen);
      MonolingualCorpus pool{"", read_sentences(sel_pool), ""};
      const auto res = moore_lewis_select({sel_t, &in_lm, &gen_lm}, pool);
      std::vector<Sentence> sents;
      std::vector<std::string> lines;
      for (const auto& r : res) {
        sents.push_back(r.sentence);
        lines.push_back(std::to_string(r.index) + "\t" + format_double(r.score, 10));
      }
      detail::write_or_print(sel_out, sents, out);
      if (!sel_scores.empty()) write_lines(sel_scores, lines);
      err << "selected " << res.size() << " of " << pool.size() << "\n";
    };
  });

  // align
  std::string al_src, al_tgt, al_langs, al_out;
  std::size_t al_iter = 5;
  auto* al = app.add_subcommand("align", "symmetrized IBM Model 1 word alignment");
  al->add_option("--src", al_src, "source file")->required();
  al->add_option("--tgt", al_tgt, "target file")->required();
  al->add_option("--langs", al_langs, "language pair")->required();
  al->add_option("--iterations", al_iter, "EM iterations")->capture_default_str();
  al->add_option("--out", al_out, "alignment file (i-j links per line; default: standard output)");
  al->callback([&] {
    action = [&] {
      const auto c = ingest_parallel(al_src, al_tgt, detail::langs_of(al_langs));
      const auto fwd = train_ibm1(c, al_iter), bwd = train_ibm1(c.reversed(), al_iter);
      std::vector<std::string> lines;
      for (const auto& p : c.pairs) lines.push_back(format_alignment(align_pair(fwd, bwd, p)));
      if (al_out.empty()) for (const auto& l : lines) out << l << "\n";
      else write_lines(al_out, lines);
    };
  });

  // phrase-table
  std::string pt_src, pt_tgt, pt_langs, pt_align, pt_out;
  std::size_t pt_iter = 5, pt_max = 7;
  auto* pt = app.add_subcommand("phrase-table", "extract and score a phrase table");
  pt->add_option("--src", pt_src, "source file")->required();
  pt->add_option("--tgt", pt_tgt, "target file")->required();
  pt->add_option("--langs", pt_langs, "language pair")->required();
  pt->add_option("--alignments", pt_align, "alignment file (default: computed)");
  pt->add_option("--iterations", pt_iter, "EM iterations for lexical tables")->capture_default_str();
  pt->add_option("--max-phrase-len", pt_max, "longest phrase")->capture_default_str()->check(CLI::PositiveNumber);
  pt->add_option("--out", pt_out, "table file")->required();
  pt->callback([&] {
    action = [&] {
      const auto c = ingest_parallel(pt_src, pt_tgt, detail::langs_of(pt_langs));
      const auto fwd = train_ibm1(c, pt_iter), bwd = train_ibm1(c.reversed(), pt_iter);
      std::vector<Alignment> aligns;
      if (pt_align.empty()) {
        for (const auto& p : c.pairs) aligns.push_back(align_pair(fwd, bwd, p));
      } else {
        for (const auto& l : read_lines(pt_align)) aligns.push_back(parse_alignment(l));
      }
      const auto table = build_phrase_table(c, aligns, fwd, bwd, pt_max);
      save_phrase_table(table, pt_out);
      err << "phrase pairs: " << table.entries.size() << "\n";
    };
  });

  // triangulate
  std::string tr_se, tr_et, tr_se_langs, tr_et_langs, tr_out;
  std::size_t tr_k = 20;
  auto* tr = app.add_subcommand("triangulate", "compose source-pivot and pivot-target tables");
  tr->add_option("--source-pivot", tr_se, "source-pivot table")->required();
  tr->add_option("--pivot-target", tr_et, "pivot-target table")->required();
  tr->add_option("--source-pivot-langs", tr_se_langs, "e.g. ja-en")->required();
  tr->add_option("--pivot-target-langs", tr_et_langs, "e.g. en-ru")->required();
  tr->add_option("-k", tr_k, "translations kept per source phrase")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--out", tr_out, "output table")->required();
  tr->callback([&] {
    action = [&] {
      const auto [s, e1] = detail::langs_of(tr_se_langs);
      const auto [e2, t] = detail::langs_of(tr_et_langs);
      const auto res = triangulate(load_phrase_table(tr_se, s, e1), load_phrase_table(tr_et, e2, t), {tr_k});
      save_phrase_table(res, tr_out);
      err << "phrase pairs: " << res.entries.size() << "\n";
    };
  });

  // prune
  std::string pr_table, pr_src, pr_tgt, pr_langs, pr_out, pr_threshold = "a+e";
  auto* pr = app.add_subcommand("prune", "Fisher exact test significance pruning");
  pr->add_option("--table", pr_table, "phrase table")->required();
  pr->add_option("--src", pr_src, "source side of the corpus the table came from")->required();
  pr->add_option("--tgt", pr_tgt, "target side")->required();
  pr->add_option("--langs", pr_langs, "language pair")->required();
  pr->add_option("--threshold", pr_threshold, "a+e, a-e, or a -ln(p) value")->capture_default_str();
  pr->add_option("--out", pr_out, "pruned table")->required();
  pr->callback([&] {
    action = [&] {
      const auto [s, t] = detail::langs_of(pr_langs);
      const auto c = ingest_parallel(pr_src, pr_tgt, {s, t});
      const auto table = load_phrase_table(pr_table, s, t);
      PruneThreshold th;
      if (pr_threshold == "a+e") th.kind = PruneThreshold::Kind::alpha_plus_epsilon;
      else if (pr_threshold == "a-e") th.kind = PruneThreshold::Kind::alpha_minus_epsilon;
      else {
        th.kind = PruneThreshold::Kind::explicit_value;
        try {
          th.value = std::stod(pr_threshold);
        } catch (const std::exception&) {
          throw CLI::ValidationError("--threshold", "expected a+e, a-e or a number");
        }
      }
      const auto res = significance_prune(table, cooccurrence_stats(c, table), th);
      save_phrase_table(res, pr_out);
      err << "kept " << res.entries.size() << " of " << table.entries.size() << " phrase pairs\n";
    };
  });

  // induce
  std::string in_src, in_tgt, in_langs, in_dict, in_out;
  InductionConfig in_cfg;
  in_cfg.dim = 50;
  double in_delta = 5, in_thr = 100;
  auto* ind = app.add_subcommand("induce", "induce a phrase table from monolingual corpora");
  ind->add_option("--src-mono", in_src, "source monolingual text")->required();
  ind->add_option("--tgt-mono", in_tgt, "target monolingual text")->required();
  ind->add_option("--langs", in_langs, "language pair")->required();
  ind->add_option("--seed-dict", in_dict, "seed dictionary, 'source target' per line")->required();
  ind->add_option("--beta", in_cfg.beta, "softmax inverse temperature")->capture_default_str();
  ind->add_option("--dim", in_cfg.dim, "embedding size")->capture_default_str();
  ind->add_option("--n-best", in_cfg.n_best, "targets kept per source phrase")->capture_default_str();
  ind->add_option("--max-phrases", in_cfg.max_phrases, "phrases per language")->capture_default_str();
  ind->add_option("--delta", in_delta, "word2phrase discount")->capture_default_str();
  ind->add_option("--phrase-threshold", in_thr, "word2phrase threshold")->capture_default_str();
  ind->add_option("--out", in_out, "output table")->required();
  ind->callback([&] {
    action = [&] {
      const auto [s, t] = detail::langs_of(in_langs);
      const auto sm = ingest_monolingual(in_src, s), tm = ingest_monolingual(in_tgt, t);
      const auto dict = detail::read_dictionary(in_dict);
      ParallelCorpus dict_corpus{s, t, {}};
      for (const auto& [a, b] : dict) dict_corpus.pairs.push_back({{a}, {b}});
      const auto lex_fwd = train_ibm1(dict_corpus, 5), lex_bwd = train_ibm1(dict_corpus.reversed(), 5);
      const auto se = train_embeddings(sm, in_cfg, mix_seed(seed, 1));
      const auto te = train_embeddings(tm, in_cfg, mix_seed(seed, 2));
      const auto mapped = map_embeddings(se, te, dict);
      const auto sp = frequent_phrases(word2phrase(sm, in_delta, in_thr), in_cfg.max_phrases);
      const auto tp = frequent_phrases(word2phrase(tm, in_delta, in_thr), in_cfg.max_phrases);
      const auto table = induce_phrase_table(sp, tp, mapped, te, lex_fwd, lex_bwd, in_cfg);
      save_phrase_table(table, in_out);
      err << "phrase pairs: " << table.entries.size() << "\n";
    };
  });

  // decode-pbsmt
  std::vector<std::string> dp_tables;
  std::string dp_lm, dp_input, dp_output, dp_langs;
  std::size_t dp_beam = 100;
  auto* dp = app.add_subcommand("decode-pbsmt", "monotone phrase-based decoding");
  dp->add_option("--table", dp_tables, "phrase tables (repeatable)")->required();
  dp->add_option("--lm", dp_lm, "target language model")->required();
  dp->add_option("--input", dp_input, "source sentences")->required();
  dp->add_option("--output", dp_output, "translations (default: standard output)");
  dp->add_option("--beam", dp_beam, "hypotheses per stack")->capture_default_str()->check(CLI::PositiveNumber);
  dp->callback([&] {
    action = [&] {
      std::vector<PhraseTable> tables;
      for (const auto& f : dp_tables) tables.push_back(load_phrase_table(f));
      PbsmtOptions opt;
      opt.beam = dp_beam;
      const pipeline::PhraseTranslator tr(std::move(tables), load_ngram(dp_lm), {}, opt);
      detail::write_or_print(dp_output, tr.translate_all(read_sentences(dp_input), threads), out);
    };
  });

  // train / finetune
  detail::TrainFlags tf, ff;
  std::string ft_init;
  auto* trn = app.add_subcommand("train", "train a multilingual model from scratch");
  detail::add_train_flags(trn, tf, true);
  trn->callback([&] {
    action = [&] {
      const auto mix = read_mixture(tf.mixture);
      if (mix.examples.empty()) throw Error("empty training mixture");
      const auto vocab = detail::vocab_from_mixture(mix, tf.vocab_max);
      nmt::ModelConfig mc;
      mc.vocab_size = vocab.size();
      mc.embed_dim = tf.embed_dim;
      mc.hidden_dim = tf.hidden_dim;
      const auto sched = detail::schedule_of(tf, seed);
      nmt::TrainOptions opt;
      opt.threads = threads;
      opt.on_checkpoint = [&](const nmt::Checkpoint& c) {
        err << "step " << c.step << " dev BLEU " << format_fixed(c.dev_bleu, 2) << " loss " << format_fixed(c.dev_loss, 4) << "\n";
      };
      const auto ckpts = nmt::train(mc, vocab, nmt::init_model(mc, seed), nmt::encode_examples(vocab, mix.examples),
                                    nmt::encode_dev(vocab, read_mixture(tf.dev).examples), sched, opt);
      detail::save_run(tf.out, mc, vocab, ckpts, tf.average_last, err);
    };
  });
  auto* fin = app.add_subcommand("finetune", "continue training from a checkpoint");
  fin->add_option("--init", ft_init, "checkpoint directory")->required();
  detail::add_train_flags(fin, ff, false);
  fin->callback([&] {
    action = [&] {
      const auto init = nmt::load_model(ft_init);
      const auto sched = detail::schedule_of(ff, seed);
      nmt::TrainOptions opt;
      opt.threads = threads;
      opt.on_checkpoint = [&](const nmt::Checkpoint& c) {
        err << "step " << c.step << " dev BLEU " << format_fixed(c.dev_bleu, 2) << " loss " << format_fixed(c.dev_loss, 4) << "\n";
      };
      const auto ckpts = nmt::fine_tune(init.binding(), init.checkpoint, init.config, init.vocab,
                                        nmt::encode_examples(init.vocab, read_mixture(ff.mixture).examples),
                                        nmt::encode_dev(init.vocab, read_mixture(ff.dev).examples), sched, opt);
      detail::save_run(ff.out, init.config, init.vocab, ckpts, ff.average_last, err);
    };
  });

  // decode
  std::string dc_model, dc_input, dc_output, dc_target;
  nmt::DecodeConfig dcfg;
  auto* dec = app.add_subcommand("decode", "beam-search decoding with a neural model");
  dec->add_option("--model", dc_model, "checkpoint directory")->required();
  dec->add_option("--input", dc_input, "source sentences (tagged unless --target-lang is given)")->required();
  dec->add_option("--target-lang", dc_target, "prepend the tag for this language");
  dec->add_option("--output", dc_output, "translations (default: standard output)");
  dec->add_option("--beam", dcfg.beam, "beam size")->capture_default_str()->check(CLI::PositiveNumber);
  dec->add_option("--alpha", dcfg.alpha, "length-penalty exponent")->capture_default_str()->check(CLI::NonNegativeNumber);
  dec->add_option("--max-len", dcfg.max_len, "output length cap (0 = 2 x source + 5)")->capture_default_str();
  dec->callback([&] {
    action = [&] {
      const auto m = nmt::load_model(dc_model);
      auto src = read_sentences(dc_input);
      if (!dc_target.empty())
        for (auto& s : src) s = tag_source(s, dc_target);
      detail::write_or_print(dc_output, nmt::translate_all(m.checkpoint.params, m.config, m.vocab, src, dcfg, threads), out);
    };
  });

  // avg-ckpt
  std::string av_dir, av_out;
  std::vector<std::string> av_list;
  std::size_t av_last = 10;
  auto* av = app.add_subcommand("avg-ckpt", "average checkpoint parameters");
  av->add_option("--dir", av_dir, "directory of ckpt-* checkpoints");
  av->add_option("--ckpt", av_list, "explicit checkpoint directories (repeatable)");
  av->add_option("--last", av_last, "number of most recent checkpoints")->capture_default_str()->check(CLI::PositiveNumber);
  av->add_option("--out", av_out, "output checkpoint directory")->required();
  av->callback([&] {
    action = [&] {
      std::vector<Path> dirs;
      if (!av_list.empty()) dirs.assign(av_list.begin(), av_list.end());
      else if (!av_dir.empty()) dirs = detail::checkpoint_dirs(av_dir);
      else throw CLI::ValidationError("avg-ckpt", "give --dir or --ckpt");
      if (av_list.empty() && dirs.size() > av_last) dirs.erase(dirs.begin(), dirs.end() - static_cast<long>(av_last));
      std::vector<nmt::NmtModel> models;
      for (const auto& d : dirs) models.push_back(nmt::load_model(d));
      std::vector<const nmt::Parameters*> ps;
      for (const auto& m : models) {
        if (!(m.binding() == models.front().binding())) throw Error("avg-ckpt: checkpoints have different bindings");
        ps.push_back(&m.checkpoint.params);
      }
      nmt::NmtModel res = models.back();
      res.checkpoint.params = nmt::average_checkpoints(ps);
      nmt::save_model(av_out, res);
      err << "averaged " << models.size() << " checkpoints\n";
    };
  });

  // grad-check
  std::string gc_model, gc_mixture;
  double gc_eps = 1e-4;
  std::size_t gc_coords = 240, gc_batch = 4;
  auto* gc = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  gc->add_option("--model", gc_model, "checkpoint directory (default: a seeded toy model)");
  gc->add_option("--mixture", gc_mixture, "examples to use (default: synthetic)");
  gc->add_option("--epsilon", gc_eps, "finite-difference step")->capture_default_str()->check(CLI::PositiveNumber);
  gc->add_option("--coordinates", gc_coords, "sampled coordinates")->capture_default_str();
  gc->add_option("--batch", gc_batch, "examples in the batch")->capture_default_str()->check(CLI::PositiveNumber);
  gc->callback([&] {
    action = [&] {
      nmt::ModelConfig mc;
      nmt::Vocab vocab;
      nmt::Parameters params;
      std::vector<nmt::Example> exs;
      if (!gc_model.empty()) {
        const auto m = nmt::load_model(gc_model);
        mc = m.config;
        vocab = m.vocab;
        params = m.checkpoint.params;
      } else {
        std::vector<Sentence> words{{"a", "b", "c", "d", "e", "f", "g", "h"}};
        vocab = nmt::Vocab::build({"xx", "yy"}, {&words});
        mc.vocab_size = vocab.size();
        mc.embed_dim = 8;
        mc.hidden_dim = 8;
        params = nmt::init_model(mc, seed);
      }
      if (!gc_mixture.empty()) {
        exs = nmt::encode_examples(vocab, read_mixture(gc_mixture).examples);
      } else {
        std::mt19937_64 rng(mix_seed(seed, 7));
        const auto first = static_cast<std::size_t>(vocab.id(tag_token(vocab.symbols().size() > 4 ? tag_language(vocab.symbols()[4]) : "xx")));
        for (std::size_t k = 0; k < gc_batch; ++k) {
          nmt::Example ex;
          ex.source.push_back(static_cast<nmt::TokenId>(first));
          for (std::size_t i = 0; i < 2 + uniform_index(rng, 4); ++i)
            ex.source.push_back(static_cast<nmt::TokenId>(4 + uniform_index(rng, vocab.size() - 4)));
          for (std::size_t i = 0; i < 1 + uniform_index(rng, 4); ++i)
            ex.target.push_back(static_cast<nmt::TokenId>(4 + uniform_index(rng, vocab.size() - 4)));
          exs.push_back(std::move(ex));
        }
      }
      if (exs.size() > gc_batch) exs.resize(gc_batch);
      std::vector<const nmt::Example*> batch;
      for (const auto& e : exs) batch.push_back(&e);
      nmt::GradCheckOptions opt;
      opt.epsilon = gc_eps;
      opt.coordinates = gc_coords;
      opt.seed = seed;
      const auto rep = nmt::grad_check(params, batch, opt);
      out << "coordinates " << rep.coords.size() << " max_relative_error " << format_double(rep.max_rel_error, 6) << "\n";
    };
  });

  // bt
  std::string bt_model, bt_input, bt_src_lang, bt_to, bt_out_prefix;
  std::size_t bt_beam = 4;
  double bt_alpha = 0;
  auto* bt = app.add_subcommand("bt", "back-translate monolingual text into pseudo-parallel data");
  bt->add_option("--model", bt_model, "checkpoint directory")->required();
  bt->add_option("--input", bt_input, "monolingual sentences (the genuine target side)")->required();
  bt->add_option("--lang", bt_src_lang, "language of --input")->required();
  bt->add_option("--to", bt_to, "language to translate into (the pseudo source side)")->required();
  bt->add_option("--out-prefix", bt_out_prefix, "writes <prefix>.<to> and <prefix>.<lang>")->required();
  bt->add_option("--beam", bt_beam, "beam size")->capture_default_str()->check(CLI::PositiveNumber);
  bt->add_option("--alpha", bt_alpha, "length-penalty exponent")->capture_default_str();
  bt->callback([&] {
    action = [&] {
      auto m = std::make_shared<const nmt::NmtModel>(nmt::load_model(bt_model));
      const auto mono = ingest_monolingual(bt_input, bt_src_lang);
      const pipeline::NmtTranslator tr(m, bt_src_lang, bt_to, {bt_beam, bt_alpha, 0});
      const auto machine = tr.translate_all(mono.sentences, threads);
      ParallelCorpus pc{bt_to, bt_src_lang, {}};
      for (std::size_t i = 0; i < machine.size(); ++i)
        pc.pairs.emplace_back(pipeline::nonempty_output(machine[i]), mono.sentences[i]);
      write_parallel(pc, bt_out_prefix + "." + bt_to, bt_out_prefix + "." + bt_src_lang);
      err << "pseudo pairs: " << pc.size() << "\n";
    };
  });

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "declarative multistage experiments");
  pl->require_subcommand(1);
  std::string pl_config, pl_store, pl_id, pl_base, pl_mode;
  std::size_t pl_rounds = 5;
  bool pl_seed_given = false;
  auto store_root = [&] { return pipeline::resolve_store_root(pl_store); };
  auto load_cfg = [&] {
    auto cfg = pipeline::load_experiment(pl_config);
    if (pl_seed_given) cfg.seed = seed;
    return cfg;
  };
  auto print_outcome = [&](const std::string& name, const pipeline::StageOutcome& o) {
    out << name << "\t" << o.model_id << "\talpha=" << format_double(o.alpha);
    for (const auto& [d, b] : o.test_bleu) out << "\t" << d << "=" << format_fixed(b, 2);
    out << "\n";
  };
  auto* plr = pl->add_subcommand("run", "run every stage of an experiment");
  plr->add_option("config", pl_config, "experiment JSON")->required();
  plr->add_option("--store", pl_store, "artifact store root (default: $LOWRES_MT_STORE or ./store)");
  plr->callback([&] {
    action = [&] {
      pipeline::ArtifactStore store(store_root());
      pipeline::Experiment ex(load_cfg(), store, {threads, &err});
      std::map<std::string, pipeline::StageOutcome> done;
      for (const auto& st : ex.config().stages) {
        done[st.id] = ex.run_stage(st, done);
        print_outcome(st.id, done[st.id]);
      }
    };
  });
  auto* plb = pl->add_subcommand("bt", "iterative back-translation from a stage model");
  plb->add_option("config", pl_config, "experiment JSON")->required();
  plb->add_option("--store", pl_store, "artifact store root");
  plb->add_option("--rounds", pl_rounds, "back-translation rounds")->capture_default_str();
  plb->add_option("--mode", pl_mode, "finetune or scratch")->check(CLI::IsMember({"finetune", "scratch"}));
  plb->add_option("--base", pl_base, "stage id or model artifact id (default: bt.base)");
  plb->callback([&] {
    action = [&] {
      auto cfg = load_cfg();
      if (!cfg.bt) throw Error("experiment has no bt section");
      auto btc = *cfg.bt;
      btc.rounds = pl_rounds;
      if (!pl_mode.empty()) btc.mode = pl_mode == "scratch" ? pipeline::BtMode::scratch : pipeline::BtMode::finetune;
      if (!pl_base.empty()) btc.base = pl_base;
      if (btc.base.empty()) throw Error("no base model: give --base or bt.base");
      pipeline::ArtifactStore store(store_root());
      pipeline::Experiment ex(cfg, store, {threads, &err});
      std::string base_id = btc.base;
      if (!store.contains(base_id)) {
        const auto stages = ex.run_multistage();
        auto it = stages.find(btc.base);
        if (it == stages.end()) throw Error("bt base '" + btc.base + "' is neither a stage nor a stored model");
        base_id = it->second.model_id;
      }
      const auto res = ex.bt_iterate(base_id, btc);
      for (std::size_t r = 0; r < res.size(); ++r) print_outcome(r == 0 ? "base" : "round-" + std::to_string(r), res[r]);
    };
  });
  auto* pll = pl->add_subcommand("lineage", "print the lineage tree of an artifact");
  pll->add_option("id", pl_id, "artifact id")->required();
  pll->add_option("--store", pl_store, "artifact store root");
  pll->callback([&] {
    action = [&] { out << pipeline::ArtifactStore(store_root()).lineage_text(pl_id); };
  });

  // bleu / compare
  std::string bl_hyp, bl_ref, cm_a, cm_b;
  std::size_t cm_samples = 1000;
  auto* bl = app.add_subcommand("bleu", "corpus BLEU of a hypothesis file");
  bl->add_option("--hyp", bl_hyp, "hypotheses")->required();
  bl->add_option("--ref", bl_ref, "references")->required();
  bl->callback([&] {
    action = [&] { out << format_bleu(bleu(read_sentences(bl_hyp), read_sentences(bl_ref))) << "\n"; };
  });
  auto* cm = app.add_subcommand("compare", "paired bootstrap significance test");
  cm->add_option("--a", cm_a, "system A hypotheses")->required();
  cm->add_option("--b", cm_b, "system B hypotheses")->required();
  cm->add_option("--ref", bl_ref, "references")->required();
  cm->add_option("--b-samples", cm_samples, "bootstrap resamples")->capture_default_str()->check(CLI::PositiveNumber);
  cm->callback([&] {
    action = [&] {
      const auto rep = paired_bootstrap(read_sentences(cm_a), read_sentences(cm_b), read_sentences(bl_ref), cm_samples,
                                        seed, threads);
      out << "BLEU(A) = " << format_fixed(rep.bleu_a, 2) << "\nBLEU(B) = " << format_fixed(rep.bleu_b, 2)
          << "\ndelta = " << format_fixed(rep.delta_bleu, 2) << "\np = " << format_double(rep.p_value, 4) << " ("
          << rep.samples << " resamples, seed " << rep.seed << ")\n";
    };
  });

  // toy-data
  std::string toy_out;
  auto* toyc = app.add_subcommand("toy-data", "write the synthetic three-language corpora and experiment");
  toyc->add_option("--out", toy_out, "output directory")->required();
  toyc->callback([&] {
    action = [&] {
      toy::ToyConfig tc;
      tc.seed = seed;
      toy::write_toy_experiment(toy_out, tc);
      err << "wrote " << (Path(toy_out) / "experiment.json").string() << "\n";
    };
  });

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  try {
    app.parse(args);
    pl_seed_given = app.get_option("--seed")->count() > 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lowres_mt::cli
