#pragma once

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lowres_mt/nmt/vocab.hpp"

namespace lowres_mt::nmt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr const char* kArchitecture = "gru-dot-attention-v1";

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t max_decode_len = 0;  // 0: 2 * source length + 5
  std::string architecture_id = kArchitecture;

  void validate() const {
    if (vocab_size < 5) throw Error("model config: vocab_size must cover the reserved symbols");
    if (embed_dim < 2 || hidden_dim < 2) throw Error("model config: dimensions must be >= 2");
    if (architecture_id != kArchitecture) throw Error("model config: unknown architecture '" + architecture_id + "'");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Parameter tensors, in storage order.
enum Param : std::size_t {
  kEmbed,   // V x E, shared by encoder and decoder inputs
  kEncW,    // 3H x E   (update, reset, candidate gates)
  kEncU,    // 3H x H
  kEncB,    // 3H x 1
  kDecW,    // 3H x E
  kDecU,    // 3H x H
  kDecB,    // 3H x 1
  kAttW,    // H x H    score_i = s^T A h_i
  kCombW,   // H x 2H   o = tanh(C [s; c] + b)
  kCombB,   // H x 1
  kOutW,    // V x H
  kOutB,    // V x 1
  kNumParams
};

inline constexpr std::array<const char*, kNumParams> kParamNames = {
    "embedding", "encoder.w", "encoder.u", "encoder.b", "decoder.w", "decoder.u",
    "decoder.b", "attention.w", "combine.w", "combine.b", "output.w", "output.b"};

inline std::array<std::pair<std::size_t, std::size_t>, kNumParams> param_shapes(const ModelConfig& c) {
  const std::size_t V = c.vocab_size, E = c.embed_dim, H = c.hidden_dim;
  return {{{V, E}, {3 * H, E}, {3 * H, H}, {3 * H, 1}, {3 * H, E}, {3 * H, H}, {3 * H, 1}, {H, H}, {H, 2 * H}, {H, 1}, {V, H}, {V, 1}}};
}

inline std::size_t parameter_count(const ModelConfig& c) {
  std::size_t n = 0;
  for (const auto& [r, k] : param_shapes(c)) n += r * k;
  return n;
}

struct Parameters {
  std::array<Matrix, kNumParams> t;

  Matrix& operator[](std::size_t i) { return t[i]; }
  const Matrix& operator[](std::size_t i) const { return t[i]; }

  static Parameters zeros(const ModelConfig& c) {
    Parameters p;
    const auto shapes = param_shapes(c);
    for (std::size_t i = 0; i < kNumParams; ++i)
      p.t[i] = Matrix::Zero(static_cast<Eigen::Index>(shapes[i].first), static_cast<Eigen::Index>(shapes[i].second));
    return p;
  }

  bool same_shape(const Parameters& o) const {
    for (std::size_t i = 0; i < kNumParams; ++i)
      if (t[i].rows() != o.t[i].rows() || t[i].cols() != o.t[i].cols()) return false;
    return true;
  }

  bool operator==(const Parameters& o) const {
    if (!same_shape(o)) return false;
    for (std::size_t i = 0; i < kNumParams; ++i)
      if (t[i] != o.t[i]) return false;
    return true;
  }

  bool all_finite() const {
    for (const auto& m : t)
      if (!m.allFinite()) return false;
    return true;
  }
};

/// Seeded uniform initialization in [-0.08, 0.08], tensor by tensor in
/// storage order, row-major within a tensor.
inline Parameters init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Parameters p = Parameters::zeros(cfg);
  std::mt19937_64 rng(seed);
  for (auto& m : p.t)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (uniform_real(rng) * 2.0 - 1.0) * 0.08;
  return p;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct GruCache {
  Vector x, h_prev, z, r, n, un, h;
};

/// h = (1-z)*n + z*h_prev with z, r gates and n = tanh(W_n x + r*(U_n h_prev) + b_n).
inline void gru_forward(const Matrix& W, const Matrix& U, const Matrix& b, const Vector& x, const Vector& h_prev,
                        GruCache& c) {
  const Eigen::Index H = h_prev.size();
  const Vector a = W * x + b.col(0);
  const Vector u = U * h_prev;
  c.x = x;
  c.h_prev = h_prev;
  c.z = (a.head(H) + u.head(H)).unaryExpr([](double v) { return sigmoid(v); });
  c.r = (a.segment(H, H) + u.segment(H, H)).unaryExpr([](double v) { return sigmoid(v); });
  c.un = u.tail(H);
  c.n = (a.tail(H) + c.r.cwiseProduct(c.un)).array().tanh().matrix();
  c.h = (Vector::Ones(H) - c.z).cwiseProduct(c.n) + c.z.cwiseProduct(h_prev);
}

/// Accumulates weight gradients, returns dL/dx and writes dL/dh_prev.
inline Vector gru_backward(const Matrix& W, const Matrix& U, const GruCache& c, const Vector& dh, Matrix& dW,
                           Matrix& dU, Matrix& db, Vector& dh_prev) {
  const Eigen::Index H = dh.size();
  const Vector dn = dh.cwiseProduct(Vector::Ones(H) - c.z);
  const Vector dz = dh.cwiseProduct(c.h_prev - c.n);
  const Vector dn_pre = dn.cwiseProduct((1.0 - c.n.array().square()).matrix());
  const Vector dr = dn_pre.cwiseProduct(c.un);
  Vector da(3 * H), du(3 * H);
  da.head(H) = dz.cwiseProduct(c.z.cwiseProduct(Vector::Ones(H) - c.z));
  da.segment(H, H) = dr.cwiseProduct(c.r.cwiseProduct(Vector::Ones(H) - c.r));
  da.tail(H) = dn_pre;
  du.head(2 * H) = da.head(2 * H);
  du.tail(H) = dn_pre.cwiseProduct(c.r);
  dW.noalias() += da * c.x.transpose();
  db.col(0) += da;
  dU.noalias() += du * c.h_prev.transpose();
  dh_prev = dh.cwiseProduct(c.z);
  dh_prev.noalias() += U.transpose() * du;
  return W.transpose() * da;
}

inline Vector log_softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

}  // namespace detail

/// Encoder annotations plus decoder recurrence state.
struct EncoderState {
  Matrix annotations;  // H x S
  Vector initial;      // H
};

inline EncoderState encode(const Parameters& p, std::span<const TokenId> src) {
  if (src.empty()) throw Error("encode: empty source");
  const Eigen::Index H = p[kEncU].cols();
  EncoderState st;
  st.annotations.resize(H, static_cast<Eigen::Index>(src.size()));
  Vector h = Vector::Zero(H);
  detail::GruCache c;
  for (std::size_t i = 0; i < src.size(); ++i) {
    detail::gru_forward(p[kEncW], p[kEncU], p[kEncB], p[kEmbed].row(src[i]).transpose(), h, c);
    h = c.h;
    st.annotations.col(static_cast<Eigen::Index>(i)) = h;
  }
  st.initial = h;
  return st;
}

/// One decoder step: consumes `prev`, updates `state`, returns log p(. | ...).
inline Vector decoder_step(const Parameters& p, const EncoderState& enc, Vector& state, TokenId prev) {
  detail::GruCache c;
  detail::gru_forward(p[kDecW], p[kDecU], p[kDecB], p[kEmbed].row(prev).transpose(), state, c);
  state = c.h;
  const Vector q = p[kAttW].transpose() * state;
  Vector scores = enc.annotations.transpose() * q;
  scores = (scores.array() - scores.maxCoeff()).exp().matrix();
  scores /= scores.sum();
  const Vector ctx = enc.annotations * scores;
  const Eigen::Index H = state.size();
  Vector pre = p[kCombB].col(0);
  pre.noalias() += p[kCombW].leftCols(H) * state;
  pre.noalias() += p[kCombW].rightCols(H) * ctx;
  const Vector o = pre.array().tanh().matrix();
  Vector logits = p[kOutB].col(0);
  logits.noalias() += p[kOutW] * o;
  return detail::log_softmax(logits);
}

struct Example {
  std::vector<TokenId> source;  // tagged
  std::vector<TokenId> target;  // without <s>/</s>
};

/// Negative log-likelihood summed over target tokens (including </s>);
/// when `grads` is non-null, adds scale * dNLL/dtheta into it.
inline double example_loss(const Parameters& p, const Example& ex, Parameters* grads, double scale = 1.0) {
  const std::size_t S = ex.source.size(), T = ex.target.size() + 1;
  if (S == 0) throw Error("empty source sentence");
  const Eigen::Index H = p[kEncU].cols();

  std::vector<detail::GruCache> enc(S);
  Matrix Hm(H, static_cast<Eigen::Index>(S));
  Vector h = Vector::Zero(H);
  for (std::size_t i = 0; i < S; ++i) {
    detail::gru_forward(p[kEncW], p[kEncU], p[kEncB], p[kEmbed].row(ex.source[i]).transpose(), h, enc[i]);
    h = enc[i].h;
    Hm.col(static_cast<Eigen::Index>(i)) = h;
  }

  struct Step {
    detail::GruCache gru;
    Vector q, alpha, ctx;
    TokenId input, gold;
  };
  std::vector<Step> steps(T);
  Matrix O(H, static_cast<Eigen::Index>(T));  // combined states, one column per step
  Vector s = h;
  for (std::size_t t = 0; t < T; ++t) {
    auto& st = steps[t];
    st.input = t == 0 ? Vocab::kBos : ex.target[t - 1];
    st.gold = t + 1 == T ? Vocab::kEos : ex.target[t];
    detail::gru_forward(p[kDecW], p[kDecU], p[kDecB], p[kEmbed].row(st.input).transpose(), s, st.gru);
    s = st.gru.h;
    st.q = p[kAttW].transpose() * s;
    Vector sc = Hm.transpose() * st.q;
    sc = (sc.array() - sc.maxCoeff()).exp().matrix();
    st.alpha = sc / sc.sum();
    st.ctx = Hm * st.alpha;
    Vector pre = p[kCombB].col(0);
    pre.noalias() += p[kCombW].leftCols(H) * s;
    pre.noalias() += p[kCombW].rightCols(H) * st.ctx;
    O.col(static_cast<Eigen::Index>(t)) = pre.array().tanh().matrix();
  }
  // Output layer for all steps at once; columns become log-probabilities.
  Matrix L = p[kOutW] * O;
  L.colwise() += p[kOutB].col(0);
  double nll = 0.0;
  for (Eigen::Index t = 0; t < L.cols(); ++t) {
    const double mx = L.col(t).maxCoeff();
    const double lse = mx + std::log((L.col(t).array() - mx).exp().sum());
    L.col(t).array() -= lse;
    nll -= L(steps[static_cast<std::size_t>(t)].gold, t);
  }
  if (!grads) return nll;

  auto& g = *grads;
  // L becomes dNLL/dlogits, then the output-layer gradients are two products.
  L = L.array().exp().matrix() * scale;
  for (std::size_t t = 0; t < T; ++t) L(steps[t].gold, static_cast<Eigen::Index>(t)) -= scale;
  g[kOutW].noalias() += L * O.transpose();
  g[kOutB].col(0) += L.rowwise().sum();
  Matrix dO = p[kOutW].transpose() * L;
  dO.array() *= 1.0 - O.array().square();
  Matrix dHm = Matrix::Zero(H, static_cast<Eigen::Index>(S));
  Vector ds_carry = Vector::Zero(H);
  for (std::size_t tt = T; tt-- > 0;) {
    auto& st = steps[tt];
    const Vector dpre = dO.col(static_cast<Eigen::Index>(tt));
    g[kCombW].leftCols(H).noalias() += dpre * st.gru.h.transpose();
    g[kCombW].rightCols(H).noalias() += dpre * st.ctx.transpose();
    g[kCombB].col(0) += dpre;
    Vector ds = p[kCombW].leftCols(H).transpose() * dpre;
    const Vector dctx = p[kCombW].rightCols(H).transpose() * dpre;
    dHm.noalias() += dctx * st.alpha.transpose();
    const Vector dalpha = Hm.transpose() * dctx;
    const Vector dscore = st.alpha.cwiseProduct((dalpha.array() - st.alpha.dot(dalpha)).matrix());
    dHm.noalias() += st.q * dscore.transpose();
    const Vector dq = Hm * dscore;
    g[kAttW].noalias() += st.gru.h * dq.transpose();
    ds.noalias() += p[kAttW] * dq;
    ds += ds_carry;
    Vector dprev;
    const Vector dx = detail::gru_backward(p[kDecW], p[kDecU], st.gru, ds, g[kDecW], g[kDecU], g[kDecB], dprev);
    g[kEmbed].row(st.input) += dx.transpose();
    ds_carry = dprev;
  }
  Vector dh_carry = ds_carry;
  for (std::size_t ii = S; ii-- > 0;) {
    const Vector dh = dHm.col(static_cast<Eigen::Index>(ii)) + dh_carry;
    Vector dprev;
    const Vector dx = detail::gru_backward(p[kEncW], p[kEncU], enc[ii], dh, g[kEncW], g[kEncU], g[kEncB], dprev);
    g[kEmbed].row(ex.source[ii]) += dx.transpose();
    dh_carry = dprev;
  }
  return nll;
}

/// Mean per-token NLL of a batch; `grads` (if given) receives
/// loss_scale * gradient of that mean.
inline double batch_loss(const Parameters& p, std::span<const Example* const> batch, Parameters* grads,
                         double loss_scale = 1.0) {
  std::size_t tokens = 0;
  for (const auto* ex : batch) tokens += ex->target.size() + 1;
  if (tokens == 0) throw Error("batch_loss: empty batch");
  const double scale = loss_scale / static_cast<double>(tokens);
  double total = 0.0;
  for (const auto* ex : batch) total += example_loss(p, *ex, grads, scale);
  return loss_scale * total / static_cast<double>(tokens);
}

}  // namespace lowres_mt::nmt
