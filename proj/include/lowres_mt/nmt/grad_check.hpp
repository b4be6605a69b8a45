#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "lowres_mt/nmt/model.hpp"

namespace lowres_mt::nmt {

struct GradCheckOptions {
  double epsilon = 1e-4;
  std::size_t coordinates = 240;  // spread evenly over the tensors
  std::uint64_t seed = 1;
  double floor = 1e-6;            // denominator floor for tiny gradients
};

struct GradCheckCoordinate {
  std::size_t tensor;
  Eigen::Index row, col;
  double analytic, numeric, rel_error;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckCoordinate> coords;
};

/// Compares analytic gradients of the mean batch loss with central
/// differences on a seeded sample of coordinates. Embedding coordinates are
/// drawn from rows of symbols that occur in the batch.
inline GradCheckReport grad_check(const Parameters& params, std::span<const Example* const> batch,
                                  const GradCheckOptions& opt = {}) {
  if (batch.empty()) throw Error("grad_check: empty batch");
  if (!(opt.epsilon > 0)) throw Error("grad_check: epsilon must be positive");
  Parameters grads = params;
  for (auto& m : grads.t) m.setZero();
  batch_loss(params, batch, &grads);

  std::set<TokenId> used{Vocab::kBos, Vocab::kEos};
  for (const auto* ex : batch) {
    used.insert(ex->source.begin(), ex->source.end());
    used.insert(ex->target.begin(), ex->target.end());
  }
  used.erase(Vocab::kEos);  // </s> is predicted, never fed as input
  const std::vector<TokenId> rows(used.begin(), used.end());

  std::mt19937_64 rng(opt.seed);
  Parameters work = params;
  GradCheckReport rep;
  const std::size_t per_tensor = (opt.coordinates + kNumParams - 1) / kNumParams;
  for (std::size_t t = 0; t < kNumParams; ++t) {
    const Matrix& m = params[t];
    for (std::size_t k = 0; k < per_tensor; ++k) {
      const Eigen::Index r = t == kEmbed ? rows[uniform_index(rng, rows.size())]
                                         : static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(m.rows())));
      const Eigen::Index c = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(m.cols())));
      const double orig = work[t](r, c);
      work[t](r, c) = orig + opt.epsilon;
      const double up = batch_loss(work, batch, nullptr);
      work[t](r, c) = orig - opt.epsilon;
      const double down = batch_loss(work, batch, nullptr);
      work[t](r, c) = orig;
      const double numeric = (up - down) / (2 * opt.epsilon);
      const double analytic = grads[t](r, c);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      rep.coords.push_back({t, r, c, analytic, numeric, rel});
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
    }
  }
  return rep;
}

}  // namespace lowres_mt::nmt
