// correspondence: pair each group training row with the population training
// row of nearest baseline score (Phase II, second half).  Ties go to the
// lowest population index; the population includes the group's own rows.
#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fairmap/core.hpp"

namespace fairmap::correspondence {

struct CorrespondenceTable {
  int group_id = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (group row, population row)
  std::vector<double> matched_scores;                      // s-hat per group row
};

struct BuildStats {
  std::size_t merge_comparisons = 0;  // excludes the O(N log N) sorts
};

// Sort + two-pointer merge.  For each matched score the only candidates are
// the two population values flanking it in sorted order; among equal
// population scores the representative carries the run's minimum original
// index, which is exactly the stated tie rule (distance first, then lowest
// original index — also covering the left/right equidistant case).
inline CorrespondenceTable build_correspondences(
    const std::vector<double>& matched_group_scores,
    const std::vector<double>& population_scores, int group_id = 0,
    BuildStats* stats = nullptr) {
  require(!matched_group_scores.empty(), errc::empty_input, "no group scores");
  require(!population_scores.empty(), errc::empty_input, "no population scores");

  const std::size_t M = population_scores.size();
  std::vector<std::size_t> pop_order(M);
  std::iota(pop_order.begin(), pop_order.end(), std::size_t{0});
  std::sort(pop_order.begin(), pop_order.end(), [&](std::size_t a, std::size_t b) {
    if (population_scores[a] != population_scores[b])
      return population_scores[a] < population_scores[b];
    return a < b;
  });
  std::vector<double> ps(M);
  std::vector<std::size_t> run_min(M);
  for (std::size_t i = 0; i < M; ++i) ps[i] = population_scores[pop_order[i]];
  for (std::size_t i = 0; i < M;) {
    std::size_t j = i;
    std::size_t mn = pop_order[i];
    while (j + 1 < M && ps[j + 1] == ps[i]) {
      ++j;
      mn = std::min(mn, pop_order[j]);
    }
    for (std::size_t t = i; t <= j; ++t) run_min[t] = mn;
    i = j + 1;
  }

  const std::size_t N = matched_group_scores.size();
  std::vector<std::size_t> grp_order(N);
  std::iota(grp_order.begin(), grp_order.end(), std::size_t{0});
  std::sort(grp_order.begin(), grp_order.end(), [&](std::size_t a, std::size_t b) {
    if (matched_group_scores[a] != matched_group_scores[b])
      return matched_group_scores[a] < matched_group_scores[b];
    return a < b;
  });

  CorrespondenceTable table;
  table.group_id = group_id;
  table.pairs.resize(N);
  table.matched_scores = matched_group_scores;

  std::size_t comparisons = 0;
  std::size_t j = 0;  // first population position with ps[j] >= current score
  for (std::size_t gi : grp_order) {
    double a = matched_group_scores[gi];
    while (j < M && ps[j] < a) {
      ++j;
      ++comparisons;
    }
    // candidates: ps[j-1] (last below) and ps[j] (first at-or-above)
    std::size_t best_idx = 0;
    double best_dist = 0.0;
    bool have = false;
    for (std::size_t c : {j == 0 ? M : j - 1, j}) {
      if (c >= M) continue;
      ++comparisons;
      double dist = std::abs(a - ps[c]);
      std::size_t idx = run_min[c];
      if (!have || dist < best_dist || (dist == best_dist && idx < best_idx)) {
        have = true;
        best_dist = dist;
        best_idx = idx;
      }
    }
    table.pairs[gi] = {gi, best_idx};
  }
  if (stats) stats->merge_comparisons = comparisons;
  return table;
}

}  // namespace fairmap::correspondence
