/* Copyright 2026 The ODPC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "odpc/error.hpp"

namespace odpc {

/// Openness in percent, 1 - sqrt(2 N_train / (N_train + N_total)), where
/// N_total counts known plus unknown test classes (13.39% for 6 known of 10).
inline double openness(int n_train_classes, int n_total_test_classes) {
  require(n_train_classes >= 1 && n_total_test_classes >= n_train_classes,
          ErrorKind::kInvalidArgument, "need n_total_test_classes >= n_train_classes >= 1");
  const double ratio = 2.0 * n_train_classes / static_cast<double>(n_train_classes + n_total_test_classes);
  return 100.0 * (1.0 - std::sqrt(ratio));
}

/// Openness with the denominator N_total + N_unknown, as the formula is often
/// written. Gives 7.42% for 6 known of 10; kept for comparison only.
inline double openness_literal(int n_train_classes, int n_total_test_classes) {
  require(n_train_classes >= 1 && n_total_test_classes >= n_train_classes,
          ErrorKind::kInvalidArgument, "need n_total_test_classes >= n_train_classes >= 1");
  const int n_unknown = n_total_test_classes - n_train_classes;
  const double ratio = 2.0 * n_train_classes / static_cast<double>(n_total_test_classes + n_unknown);
  return 100.0 * (1.0 - std::sqrt(ratio));
}

/// AUROC as an exact fraction: numerator = 2 * #(ood > id) + #(ties),
/// denominator = 2 * n_id * n_ood.
struct AurocCounts {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;

  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
};

/// Rank-sum (Mann-Whitney) AUROC with OOD as the positive class and midranks
/// for ties. O(n log n).
inline AurocCounts auroc_counts(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
  require(!id_scores.empty() && !ood_scores.empty(), ErrorKind::kInvalidArgument,
          "AUROC needs at least one ID and one OOD score");
  struct Item {
    double score;
    bool ood;
  };
  std::vector<Item> items;
  items.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) items.push_back({s, false});
  for (double s : ood_scores) items.push_back({s, true});
  for (const auto& it : items)
    require(!std::isnan(it.score), ErrorKind::kInvalidArgument, "NaN score");
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Doubled midrank of a tie group occupying positions [i, j) is i + 1 + j.
  std::uint64_t rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i + 1;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    std::uint64_t ood_in_group = 0;
    for (std::size_t t = i; t < j; ++t) ood_in_group += items[t].ood ? 1 : 0;
    rank_sum_x2 += ood_in_group * static_cast<std::uint64_t>(i + 1 + j);
    i = j;
  }
  const std::uint64_t n_ood = ood_scores.size();
  const std::uint64_t n_id = id_scores.size();
  return {rank_sum_x2 - n_ood * (n_ood + 1), 2 * n_ood * n_id};
}

inline double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
  return auroc_counts(id_scores, ood_scores).value();
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population standard deviation, so a single repeat reports 0.
inline MeanStd mean_std(const std::vector<double>& values) {
  require(!values.empty(), ErrorKind::kInvalidArgument, "no values");
  MeanStd out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size()));
  return out;
}

}  // namespace odpc
