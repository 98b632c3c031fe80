#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vdl/dataset.hpp"

namespace vdl {

/// One row of the per-iteration learning curve.
struct MetricRecord {
  std::size_t iteration = 0;          // 1-based
  double sampling_percent = 0.0;
  std::optional<double> eer_percent;  // absent when evaluation labels are unavailable
};

/// False-positive and false-negative rates of the rule "positive iff score >= threshold".
struct OperatingPoint {
  double fpr;
  double fnr;
};

/// Where FPR and FNR cross between two consecutive operating points. `prev`
/// must have fpr > fnr and `next` fpr <= fnr.
inline double interpolate_crossing(OperatingPoint prev, OperatingPoint next) {
  const double a = prev.fpr - prev.fnr;
  const double b = next.fpr - next.fnr;
  if (b == 0.0) return next.fpr;
  const double lambda = a / (a - b);
  return (1.0 - lambda) * prev.fpr + lambda * next.fpr;
}

/**
 * Equal error rate in percent.
 *
 * Thresholds are the sorted unique scores followed by +infinity. FPR falls and
 * FNR rises as the threshold grows; the EER is read at the first threshold
 * where FPR - FNR stops being positive, linearly interpolated from the
 * previous threshold when the two rates do not meet exactly.
 */
inline double eer(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("eer: score/label count mismatch");
  std::size_t n_pos = 0;
  for (Label l : labels) n_pos += (l == Label::positive);
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("eer: need both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const double P = static_cast<double>(n_pos), N = static_cast<double>(n_neg);
  std::size_t pos_below = 0, neg_below = 0;
  OperatingPoint prev{1.0, 0.0};
  std::size_t r = 0;
  while (r < order.size()) {
    // Threshold = scores[order[r]]: everything before r is below it.
    const OperatingPoint cur{(N - static_cast<double>(neg_below)) / N, static_cast<double>(pos_below) / P};
    if (cur.fpr - cur.fnr <= 0.0) return 100.0 * (r == 0 ? cur.fpr : interpolate_crossing(prev, cur));
    prev = cur;
    const double s = scores[order[r]];
    while (r < order.size() && scores[order[r]] == s) {
      if (labels[order[r]] == Label::positive) ++pos_below; else ++neg_below;
      ++r;
    }
  }
  return 100.0 * interpolate_crossing(prev, OperatingPoint{0.0, 1.0});
}

/// Mean of the per-iteration EERs (the learning-curve "AUC").
inline double auc_over_iterations(std::span<const double> eers) {
  if (eers.empty()) throw std::invalid_argument("auc_over_iterations: empty list");
  return std::accumulate(eers.begin(), eers.end(), 0.0) / static_cast<double>(eers.size());
}

/// Cumulative share of the training half labeled after t displays of size k.
inline double sampling_percent(std::size_t t, std::size_t k, std::size_t n_total) {
  if (t == 0 || k == 0 || n_total == 0) return 0.0;
  return static_cast<double>(t * k) / (static_cast<double>(n_total) / 2.0) * 100.0;
}

/// Truncates toward zero at two decimals, the convention of the published tables.
inline double truncate_2dp(double v) { return std::trunc(v * 100.0 + (v >= 0 ? 1e-9 : -1e-9)) / 100.0; }

}  // namespace vdl
