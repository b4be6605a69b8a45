#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lowres_mt/common.hpp"

namespace lowres_mt::pipeline {

template <class T>
struct GridRow {
  T value;
  std::optional<double> score;  // empty when the objective failed
  std::string error;
};

template <class T>
struct GridResult {
  T best;
  double best_score = 0.0;
  std::vector<GridRow<T>> rows;  // in candidate order
};

/// Evaluates `objective` on every candidate and returns the argmax; ties go
/// to the smaller candidate. A throwing objective is recorded for that
/// candidate and the best among the successful ones is returned.
template <class T>
GridResult<T> grid_search(const std::vector<T>& candidates, const std::function<double(const T&)>& objective) {
  if (candidates.empty()) throw Error("grid_search: no candidates");
  GridResult<T> res;
  bool found = false;
  for (const auto& c : candidates) {
    GridRow<T> row{c, std::nullopt, {}};
    try {
      row.score = objective(c);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (row.score) {
      const double s = *row.score;
      if (!found || s > res.best_score || (s == res.best_score && c < res.best)) {
        res.best = c;
        res.best_score = s;
        found = true;
      }
    }
    res.rows.push_back(std::move(row));
  }
  if (!found) throw Error("grid_search: objective failed for every candidate (first: " + res.rows.front().error + ")");
  return res;
}

}  // namespace lowres_mt::pipeline
