#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lowres_mt/corpus.hpp"
#include "lowres_mt/eval.hpp"
#include "lowres_mt/nmt/decode.hpp"

namespace lowres_mt::nmt {

enum class Optimizer { sgd, adam };

struct TrainSchedule {
  std::size_t eval_every = 1000;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  std::size_t max_updates = 100000;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::sgd;
  double clip_norm = 5.0;  // 0 disables clipping

  void validate() const {
    if (eval_every < 1) throw Error("schedule: eval_every must be >= 1");
    if (patience < 1) throw Error("schedule: patience must be >= 1");
    if (batch_size < 1) throw Error("schedule: batch_size must be >= 1");
    if (!(learning_rate > 0)) throw Error("schedule: learning_rate must be positive");
  }
};

struct Checkpoint {
  std::size_t step = 0;
  Parameters params;
  double dev_bleu = 0.0;
  double dev_loss = std::numeric_limits<double>::infinity();  // mean per-token NLL on dev
};

/// Dev ordering: higher BLEU, then lower loss.
inline bool dev_better(double bleu_a, double loss_a, double bleu_b, double loss_b) {
  return bleu_a > bleu_b || (bleu_a == bleu_b && loss_a < loss_b);
}

/// Index of the dev-best checkpoint (the earliest on full ties).
inline std::size_t best_checkpoint(const std::vector<Checkpoint>& ckpts) {
  if (ckpts.empty()) throw Error("best_checkpoint: no checkpoints");
  std::size_t best = 0;
  for (std::size_t i = 1; i < ckpts.size(); ++i)
    if (dev_better(ckpts[i].dev_bleu, ckpts[i].dev_loss, ckpts[best].dev_bleu, ckpts[best].dev_loss)) best = i;
  return best;
}

/// Shape and vocabulary a set of parameters is bound to.
struct ModelBinding {
  ModelConfig config;
  std::string vocab_hash;

  bool operator==(const ModelBinding&) const = default;
};

struct DevExample {
  std::vector<TokenId> source;  // tagged
  Sentence reference;
};

/// Stops once `patience` consecutive evaluations fail to beat the best.
/// An evaluation beats the best on a higher value, or on an equal value
/// with a lower loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records an evaluation; returns true when training should stop.
  bool update(double value, double loss = 0.0) {
    if (dev_better(value, loss, best_, best_loss_)) {
      best_ = value;
      best_loss_ = loss;
      since_best_ = 0;
    } else {
      ++since_best_;
    }
    return since_best_ >= patience_;
  }

  double best() const { return best_; }
  std::size_t since_best() const { return since_best_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::size_t since_best_ = 0;
};

inline std::vector<Example> encode_examples(const Vocab& vocab, const std::vector<MixtureExample>& mix) {
  std::vector<Example> out;
  out.reserve(mix.size());
  for (const auto& ex : mix) {
    if (ex.source.empty() || !vocab.contains(ex.source.front()) || !is_tag_token(ex.source.front()))
      throw Error("training example source is not tagged with a known language: '" + join_tokens(ex.source) + "'");
    out.push_back({vocab.encode(ex.source), vocab.encode(ex.target)});
  }
  return out;
}

inline std::vector<DevExample> encode_dev(const Vocab& vocab, const std::vector<MixtureExample>& dev) {
  std::vector<DevExample> out;
  for (const auto& ex : dev) {
    if (ex.source.empty() || !vocab.contains(ex.source.front()))
      throw Error("dev example source is not tagged with a known language");
    out.push_back({vocab.encode(ex.source), ex.target});
  }
  return out;
}

/// Corpus BLEU of greedy translations of the dev set.
inline double dev_bleu(const Parameters& p, const ModelConfig& mc, const Vocab& vocab,
                       const std::vector<DevExample>& dev, unsigned threads = 1) {
  if (dev.empty()) throw Error("dev set is empty");
  std::vector<Sentence> hyps(dev.size()), refs(dev.size());
  parallel_for(dev.size(), threads, [&](std::size_t i) {
    hyps[i] = vocab.decode(greedy_decode(p, mc, vocab, dev[i].source).tokens);
  });
  for (std::size_t i = 0; i < dev.size(); ++i) refs[i] = dev[i].reference;
  return bleu(hyps, refs).score;
}

/// Mean per-token teacher-forced NLL of the references (EOS included).
inline double dev_loss(const Parameters& p, const Vocab& vocab, const std::vector<DevExample>& dev,
                       unsigned threads = 1) {
  if (dev.empty()) throw Error("dev set is empty");
  std::vector<double> nll(dev.size());
  std::size_t tokens = 0;
  for (const auto& d : dev) tokens += d.reference.size() + 1;
  parallel_for(dev.size(), threads, [&](std::size_t i) {
    nll[i] = example_loss(p, {dev[i].source, vocab.encode(dev[i].reference)}, nullptr);
  });
  double total = 0;
  for (double x : nll) total += x;
  return total / static_cast<double>(tokens);
}

inline double gradient_norm(const Parameters& g) {
  double s = 0;
  for (const auto& m : g.t) s += m.squaredNorm();
  return std::sqrt(s);
}

struct TrainOptions {
  unsigned threads = 1;                                    // dev decoding only
  std::vector<double>* loss_log = nullptr;                 // per-update batch loss
  std::function<void(const Checkpoint&)> on_checkpoint;    // progress hook
};

namespace detail {

struct AdamState {
  Parameters m, v;
  std::size_t t = 0;
};

inline void apply_update(Parameters& p, Parameters& g, const TrainSchedule& s, AdamState* adam) {
  if (s.clip_norm > 0) {
    const double n = gradient_norm(g);
    if (n > s.clip_norm)
      for (auto& m : g.t) m *= s.clip_norm / n;
  }
  if (s.optimizer == Optimizer::sgd) {
    for (std::size_t i = 0; i < kNumParams; ++i) p[i] -= s.learning_rate * g[i];
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++adam->t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam->t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam->t));
  for (std::size_t i = 0; i < kNumParams; ++i) {
    adam->m[i] = b1 * adam->m[i] + (1 - b1) * g[i];
    adam->v[i] = b2 * adam->v[i] + (1 - b2) * g[i].cwiseProduct(g[i]);
    p[i].array() -= s.learning_rate * (adam->m[i].array() / c1) / ((adam->v[i].array() / c2).sqrt() + eps);
  }
}

inline std::vector<Checkpoint> run_training(const ModelConfig& mc, const Vocab& vocab, Checkpoint start,
                                            const std::vector<Example>& data, const std::vector<DevExample>& dev,
                                            const TrainSchedule& sched, const TrainOptions& opt) {
  sched.validate();
  mc.validate();
  if (vocab.size() != mc.vocab_size) throw Error("vocabulary size does not match the model configuration");
  if (data.empty()) throw Error("training data is empty");
  if (dev.empty()) throw Error("dev set is empty");
  for (const auto& ex : data)
    for (const auto* seq : {&ex.source, &ex.target})
      for (auto id : *seq)
        if (id < 0 || static_cast<std::size_t>(id) >= mc.vocab_size) throw Error("token id outside vocabulary");

  std::vector<Checkpoint> out;
  if (sched.max_updates == 0) {
    out.push_back(std::move(start));
    return out;
  }
  Parameters p = std::move(start.params);
  AdamState adam;
  if (sched.optimizer == Optimizer::adam) adam = {Parameters::zeros(mc), Parameters::zeros(mc), 0};
  EarlyStopping stopper(sched.patience);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size(), epoch = 0;
  std::vector<const Example*> batch;
  for (std::size_t update = 1; update <= sched.max_updates; ++update) {
    batch.clear();
    while (batch.size() < sched.batch_size && batch.size() < data.size()) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(mix_seed(sched.seed, epoch++));
        deterministic_shuffle(order, rng);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    Parameters g = Parameters::zeros(mc);
    const double loss = batch_loss(p, batch, &g);
    if (!std::isfinite(loss) || !g.all_finite())
      throw Error("training diverged at update " + std::to_string(start.step + update) + " (loss " +
                  format_double(loss) + ")");
    if (opt.loss_log) opt.loss_log->push_back(loss);
    apply_update(p, g, sched, &adam);
    if (update % sched.eval_every == 0 || update == sched.max_updates) {
      Checkpoint c{start.step + update, p, dev_bleu(p, mc, vocab, dev, opt.threads),
                   dev_loss(p, vocab, dev, opt.threads)};
      if (opt.on_checkpoint) opt.on_checkpoint(c);
      const bool stop = stopper.update(c.dev_bleu, c.dev_loss);
      out.push_back(std::move(c));
      if (stop) break;
    }
  }
  return out;
}

}  // namespace detail

/// Teacher-forced cross-entropy training from `init`, with dev BLEU and dev
/// loss evaluated every eval_every updates and early stopping on patience.
inline std::vector<Checkpoint> train(const ModelConfig& mc, const Vocab& vocab, Parameters init,
                                     const std::vector<Example>& data, const std::vector<DevExample>& dev,
                                     const TrainSchedule& sched, const TrainOptions& opt = {}) {
  Checkpoint start{0, std::move(init), 0.0};
  if (!start.params.same_shape(Parameters::zeros(mc))) throw Error("initial parameters do not match the model configuration");
  return detail::run_training(mc, vocab, std::move(start), data, dev, sched, opt);
}

/// Continues training from an existing checkpoint. The checkpoint must be
/// bound to the same configuration and vocabulary as the new run.
inline std::vector<Checkpoint> fine_tune(const ModelBinding& init_binding, const Checkpoint& init,
                                         const ModelConfig& mc, const Vocab& vocab, const std::vector<Example>& data,
                                         const std::vector<DevExample>& dev, const TrainSchedule& sched,
                                         const TrainOptions& opt = {}) {
  if (init_binding.vocab_hash != vocab.hash()) throw Error("fine_tune: vocabulary of the initial model differs");
  if (!(init_binding.config == mc)) throw Error("fine_tune: model configuration of the initial model differs");
  if (!init.params.same_shape(Parameters::zeros(mc))) throw Error("fine_tune: parameter shapes differ");
  return detail::run_training(mc, vocab, init, data, dev, sched, opt);
}

/// Elementwise mean of the parameters of the given checkpoints, as a
/// running mean so identical inputs average to themselves exactly.
inline Parameters average_checkpoints(const std::vector<const Parameters*>& ckpts) {
  if (ckpts.empty()) throw Error("average_checkpoints: no checkpoints");
  Parameters avg = *ckpts.front();
  for (std::size_t k = 1; k < ckpts.size(); ++k) {
    if (!ckpts[k]->same_shape(avg)) throw Error("average_checkpoints: shape mismatch");
    for (std::size_t i = 0; i < kNumParams; ++i) avg[i] += ((*ckpts[k])[i] - avg[i]) / static_cast<double>(k + 1);
  }
  return avg;
}

inline Parameters average_last(const std::vector<Checkpoint>& ckpts, std::size_t n = 10) {
  if (ckpts.empty()) throw Error("average_checkpoints: no checkpoints");
  std::vector<const Parameters*> ps;
  for (std::size_t i = ckpts.size() > n ? ckpts.size() - n : 0; i < ckpts.size(); ++i) ps.push_back(&ckpts[i].params);
  return average_checkpoints(ps);
}

/// Mean of the `n` checkpoints ending at the dev-best one.
inline Parameters average_to_best(const std::vector<Checkpoint>& ckpts, std::size_t n = 10) {
  const std::size_t best = best_checkpoint(ckpts);
  std::vector<const Parameters*> ps;
  for (std::size_t i = best + 1 > n ? best + 1 - n : 0; i <= best; ++i) ps.push_back(&ckpts[i].params);
  return average_checkpoints(ps);
}

}  // namespace lowres_mt::nmt
