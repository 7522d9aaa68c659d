#pragma once

// Independent brute-force oracles used by the unit and acceptance suites.
// These deliberately avoid the library's implementations: the AUROC oracle
// counts (positive, negative) pairs, the AP oracle integrates the
// precision-recall staircase over explicit thresholds, and the Welch oracle
// recomputes the t statistic long-hand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "slicebench/rng.hpp"

namespace oracle {

inline double pairwise_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double num = 0.0;
  size_t n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    ++n_pos;
    for (size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  for (int y : labels) n_neg += (y != 1);
  return num / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double step_average_precision(const std::vector<double>& scores,
                                     const std::vector<int>& labels) {
  std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
  size_t n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    size_t tp = 0, fp = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < t) continue;
      (labels[i] == 1 ? tp : fp)++;
    }
    double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

inline double welch_t_longhand(const std::vector<double>& a, const std::vector<double>& b) {
  long double ma = 0.0L, mb = 0.0L;
  for (double v : a) ma += v;
  for (double v : b) mb += v;
  ma /= a.size();
  mb /= b.size();
  long double va = 0.0L, vb = 0.0L;
  for (double v : a) va += (v - ma) * (v - ma);
  for (double v : b) vb += (v - mb) * (v - mb);
  va /= (a.size() - 1);
  vb /= (b.size() - 1);
  long double denom = va / a.size() + vb / b.size();
  if (denom < 1e-12L) denom = 1e-12L;
  return static_cast<double>((ma - mb) / std::sqrt(denom));
}

// Random slice with optional score ties (scores drawn from a small grid).
inline void random_slice(slicebench::Rng& rng, size_t max_n, bool with_ties,
                         std::vector<double>& scores, std::vector<int>& labels) {
  size_t n = 2 + rng.next_below(max_n - 1);
  scores.resize(n);
  labels.resize(n);
  for (size_t i = 0; i < n; ++i) {
    scores[i] = with_ties ? static_cast<double>(rng.next_below(8)) / 7.0 : rng.next_double();
    labels[i] = rng.next_below(2) == 0 ? 0 : 1;
  }
  bool pos = false, neg = false;
  for (int y : labels) (y ? pos : neg) = true;
  if (!pos) labels[0] = 1;
  if (!neg) labels[n - 1] = 0;
}

}  // namespace oracle
