#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "esld/errors.hpp"
#include "esld/types.hpp"

namespace esld {

struct EvalResult {
  double bacc = 0.0;
  double auc = 0.0;
  double tpr = 0.0;
  double tnr = 0.0;
  std::size_t n_attack = 0;
  std::size_t n_benign = 0;
};

namespace detail {

inline void count_classes(std::span<const Label> labels, std::size_t& n_attack, std::size_t& n_benign) {
  n_attack = n_benign = 0;
  for (auto l : labels) {
    if (l == Label::attack) {
      ++n_attack;
    } else if (l == Label::benign) {
      ++n_benign;
    } else {
      throw MetricError("labels must be attack or benign");
    }
  }
  if (n_attack == 0 || n_benign == 0) throw MetricError("metric undefined: labels contain a single class");
}

}  // namespace detail

// Mean of attack recall and benign recall.
inline double balanced_accuracy(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("balanced_accuracy: length mismatch");
  std::size_t n_attack = 0, n_benign = 0;
  detail::count_classes(labels, n_attack, n_benign);
  std::size_t hit_attack = 0, hit_benign = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] != labels[i]) continue;
    (labels[i] == Label::attack ? hit_attack : hit_benign) += 1;
  }
  return 0.5 * (static_cast<double>(hit_attack) / static_cast<double>(n_attack) +
                static_cast<double>(hit_benign) / static_cast<double>(n_benign));
}

// Mann-Whitney AUC with midranks for ties.
//
// Works on doubled ranks so the U statistic stays an integer; the result is
// then exactly (2U) / (2 n1 n0), the same rational the pairwise definition
// produces.
inline double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: length mismatch");
  std::size_t n_attack = 0, n_benign = 0;
  detail::count_classes(labels, n_attack, n_benign);
  for (double s : scores) {
    if (!std::isfinite(s)) throw NonFiniteError("roc_auc: non-finite score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::uint64_t rank_sum2 = 0;  // sum of 2 * midrank over attack items
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // Positions i..j-1 share ranks i+1..j; twice their mean is i+1+j.
    const std::uint64_t midrank2 = static_cast<std::uint64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::attack) rank_sum2 += midrank2;
    }
    i = j;
  }
  const std::uint64_t n1 = n_attack;
  const std::uint64_t u2 = rank_sum2 - n1 * (n1 + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n1) * static_cast<double>(n_benign));
}

// Thresholds at s >= 0 and reports both metrics.
inline EvalResult evaluate_scores(std::span<const double> scores, std::span<const Label> labels) {
  EvalResult r;
  detail::count_classes(labels, r.n_attack, r.n_benign);
  std::vector<Label> pred(scores.size());
  std::size_t hit_attack = 0, hit_benign = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    pred[i] = scores[i] >= 0.0 ? Label::attack : Label::benign;
    if (pred[i] == labels[i]) (labels[i] == Label::attack ? hit_attack : hit_benign) += 1;
  }
  r.tpr = static_cast<double>(hit_attack) / static_cast<double>(r.n_attack);
  r.tnr = static_cast<double>(hit_benign) / static_cast<double>(r.n_benign);
  r.bacc = balanced_accuracy(pred, labels);
  r.auc = roc_auc(scores, labels);
  return r;
}

}  // namespace esld
