#pragma once

#include <memory>
#include <string>

#include "lowres_mt/corpus.hpp"
#include "lowres_mt/nmt/checkpoint_io.hpp"
#include "lowres_mt/pbsmt_decoder.hpp"

namespace lowres_mt::pipeline {

/// A system translating sentences from one language into another.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::string source_lang() const = 0;
  virtual std::string target_lang() const = 0;
  virtual Sentence translate(const Sentence& s) const = 0;

  std::vector<Sentence> translate_all(const std::vector<Sentence>& in, unsigned threads = 1) const {
    std::vector<Sentence> out(in.size());
    parallel_for(in.size(), threads, [&](std::size_t i) { out[i] = translate(in[i]); });
    return out;
  }
};

class IdentityTranslator : public Translator {
 public:
  IdentityTranslator(std::string src, std::string tgt) : src_(std::move(src)), tgt_(std::move(tgt)) {}
  std::string source_lang() const override { return src_; }
  std::string target_lang() const override { return tgt_; }
  Sentence translate(const Sentence& s) const override { return s; }

 private:
  std::string src_, tgt_;
};

/// Monotone phrase-based decoding with one or more tables and a target LM.
class PhraseTranslator : public Translator {
 public:
  PhraseTranslator(std::vector<PhraseTable> tables, NGramModel lm, PbsmtWeights w = {}, PbsmtOptions opt = {})
      : tables_(std::move(tables)), lm_(std::move(lm)), weights_(w), options_(opt) {
    if (tables_.empty()) throw Error("phrase translator: no phrase table");
    for (const auto& t : tables_)
      if (t.src_lang != tables_.front().src_lang || t.tgt_lang != tables_.front().tgt_lang)
        throw Error("phrase translator: tables cover different language pairs");
    std::vector<const PhraseTable*> ptrs;
    for (const auto& t : tables_) ptrs.push_back(&t);
    index_ = std::make_unique<PhraseIndex>(ptrs);
  }
  std::string source_lang() const override { return tables_.front().src_lang; }
  std::string target_lang() const override { return tables_.front().tgt_lang; }
  Sentence translate(const Sentence& s) const override {
    return decode_monotone_scored(*index_, lm_, weights_, s, options_).output;
  }

 private:
  std::vector<PhraseTable> tables_;
  NGramModel lm_;
  PbsmtWeights weights_;
  PbsmtOptions options_;
  std::unique_ptr<PhraseIndex> index_;
};

/// A multilingual neural model used in one direction via its target tag.
class NmtTranslator : public Translator {
 public:
  NmtTranslator(std::shared_ptr<const nmt::NmtModel> model, std::string src, std::string tgt,
                nmt::DecodeConfig dc = {})
      : model_(std::move(model)), src_(std::move(src)), tgt_(std::move(tgt)), dc_(dc) {
    if (!model_->vocab.contains(tag_token(tgt_))) throw Error("neural translator: model has no tag for '" + tgt_ + "'");
  }
  std::string source_lang() const override { return src_; }
  std::string target_lang() const override { return tgt_; }
  Sentence translate(const Sentence& s) const override {
    return nmt::beam_decode(model_->checkpoint.params, model_->config, model_->vocab, tag_source(s, tgt_), dc_);
  }

 private:
  std::shared_ptr<const nmt::NmtModel> model_;
  std::string src_, tgt_;
  nmt::DecodeConfig dc_;
};

/// Machine output used as a corpus side; an empty output becomes a single
/// unknown-word token so the pair stays well formed.
inline Sentence nonempty_output(Sentence s) {
  if (s.empty()) s.push_back("<unk>");
  return s;
}

/// Two-step decoding through a pivot: output i = second(first(input i)).
inline MonolingualCorpus pivot_cascade(const Translator& first, const Translator& second,
                                       const MonolingualCorpus& corpus, unsigned threads = 1) {
  if (first.target_lang() != second.source_lang())
    throw Error("pivot_cascade: first system outputs '" + first.target_lang() + "' but second expects '" +
                second.source_lang() + "'");
  if (!corpus.lang.empty() && corpus.lang != first.source_lang())
    throw Error("pivot_cascade: input is '" + corpus.lang + "' but first system expects '" + first.source_lang() + "'");
  MonolingualCorpus out{second.target_lang(), {}, corpus.domain_label};
  out.sentences = second.translate_all(first.translate_all(corpus.sentences, threads), threads);
  return out;
}

/// Translates the pivot side of a target-pivot bitext into the source
/// language, giving a source-target corpus whose target side is the original.
inline ParallelCorpus pivot_synthesize(const ParallelCorpus& bitext, const Translator& pivot_to_source,
                                       unsigned threads = 1) {
  if (bitext.tgt_lang != pivot_to_source.source_lang())
    throw Error("pivot_synthesize: bitext pivot side is '" + bitext.tgt_lang + "' but the translator reads '" +
                pivot_to_source.source_lang() + "'");
  const auto synth = pivot_to_source.translate_all(bitext.targets(), threads);
  ParallelCorpus out{pivot_to_source.target_lang(), bitext.src_lang, {}};
  for (std::size_t i = 0; i < bitext.size(); ++i) out.pairs.emplace_back(nonempty_output(synth[i]), bitext.pairs[i].first);
  return out;
}

}  // namespace lowres_mt::pipeline
