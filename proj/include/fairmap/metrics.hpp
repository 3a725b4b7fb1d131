// metrics: inter-group fairness (CV score over a threshold grid -> Delta_TIDP),
// within-group fairness (signed-distance flips -> Delta_WGF), and performance
// (accuracy at 0.5, Mann-Whitney AUC).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fairmap/core.hpp"

namespace fairmap::metrics {

struct FairnessReport {
  std::vector<std::pair<double, double>> cv_curve;   // (threshold, CV)
  double delta_tidp = 0.0;
  std::vector<std::pair<double, double>> wgf_curve;  // (epsilon, Delta_WGF)
  double delta_wgf_avg = 0.0;
  double accuracy_at_half = 0.0;
  double auc = 0.0;
};

// phi(x, y): |x-y| signed + when x <= y, - when x > y (Eq. 2 with the
// absolute-value metric); equivalently y - x on [0,1].
inline double signed_distance(double x, double y) {
  return x <= y ? std::abs(x - y) : -std::abs(x - y);
}

inline double cv_score(const std::vector<double>& scores_g1,
                       const std::vector<double>& scores_g2, double t) {
  require(!scores_g1.empty() && !scores_g2.empty(), errc::empty_input,
          "cv_score needs both groups nonempty");
  auto frac_above = [t](const std::vector<double>& s) {
    std::size_t c = 0;
    for (double v : s) c += v > t ? 1 : 0;  // strict, Eq. 1
    return static_cast<double>(c) / static_cast<double>(s.size());
  };
  return std::abs(frac_above(scores_g1) - frac_above(scores_g2));
}

inline std::pair<std::vector<std::pair<double, double>>, double> delta_tidp(
    const std::vector<double>& scores_g1, const std::vector<double>& scores_g2,
    std::size_t grid_size = 1001) {
  require(grid_size >= 2, errc::argument, "grid_size must be >= 2");
  require(!scores_g1.empty() && !scores_g2.empty(), errc::empty_input,
          "delta_tidp needs both groups nonempty");
  // Evaluating the survival functions on sorted copies makes the grid sweep
  // O((n + grid) log n)-ish instead of O(n * grid).
  std::vector<double> s1 = scores_g1, s2 = scores_g2;
  std::sort(s1.begin(), s1.end());
  std::sort(s2.begin(), s2.end());
  auto frac_above = [](const std::vector<double>& s, double t) {
    auto it = std::upper_bound(s.begin(), s.end(), t);
    return static_cast<double>(s.end() - it) / static_cast<double>(s.size());
  };
  std::vector<std::pair<double, double>> curve(grid_size);
  double sum = 0.0;
  for (std::size_t i = 0; i < grid_size; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(grid_size - 1);
    double cv = std::abs(frac_above(s1, t) - frac_above(s2, t));
    curve[i] = {t, cv};
    sum += cv;
  }
  return {std::move(curve), sum / static_cast<double>(grid_size)};
}

namespace detail {

struct GroupIndex {
  std::vector<std::vector<std::size_t>> members;  // per distinct group
  std::size_t pair_count(std::size_t g) const {
    std::size_t n = members[g].size();
    return n * (n - 1) / 2;
  }
};

inline GroupIndex index_groups(const std::vector<int>& groups) {
  GroupIndex gi;
  std::vector<int> ids;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto it = std::find(ids.begin(), ids.end(), groups[i]);
    std::size_t slot;
    if (it == ids.end()) {
      ids.push_back(groups[i]);
      gi.members.emplace_back();
      slot = ids.size() - 1;
    } else {
      slot = static_cast<std::size_t>(it - ids.begin());
    }
    gi.members[slot].push_back(i);
  }
  return gi;
}

}  // namespace detail

struct WgfOptions {
  // Exact enumeration up to this many ordered comparisons per group
  // (10^5 per the declared design decision); above it, a seeded pair
  // subsample estimates the rate.
  std::size_t exact_pair_limit = 100000;
  std::size_t subsample_pairs = 200000;  // sampled unordered pairs per group
  std::uint64_t subsample_seed = 0x77676673ull;
  bool force_exact = false;
};

struct WgfEstimate {
  double value = 0.0;
  double standard_error = 0.0;  // 0 when exact
  bool subsampled = false;
};

// Paper Eq. 5 on one epsilon: fraction of within-group unordered pairs whose
// signed distance changed by more than epsilon between R and Q (doubled and
// divided by sum N_g (N_g - 1), which is the same fraction).
inline WgfEstimate delta_wgf_estimate(const std::vector<double>& scores_Q,
                                      const std::vector<double>& scores_R,
                                      const std::vector<int>& groups,
                                      double epsilon,
                                      const WgfOptions& opt = {}) {
  require(scores_Q.size() == scores_R.size() && scores_R.size() == groups.size(),
          errc::dimension_mismatch, "delta_wgf vectors must share length");
  require(!groups.empty(), errc::empty_input, "delta_wgf on empty input");
  require(epsilon >= 0.0, errc::argument, "epsilon must be >= 0");

  auto gi = detail::index_groups(groups);
  std::size_t total_pairs = 0;
  for (std::size_t g = 0; g < gi.members.size(); ++g)
    total_pairs += gi.pair_count(g);
  require(total_pairs > 0, errc::undefined_metric,
          "all groups are singletons; Delta_WGF denominator is zero");

  WgfEstimate est;
  std::size_t violations = 0;
  double subsample_var = 0.0;
  for (std::size_t g = 0; g < gi.members.size(); ++g) {
    const auto& m = gi.members[g];
    std::size_t n = m.size();
    if (n < 2) continue;
    // ordered comparisons per group = n(n-1); the exact path is O(n^2)
    bool exact = opt.force_exact || n * (n - 1) <= opt.exact_pair_limit;
    if (exact) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          double dq = signed_distance(scores_Q[m[i]], scores_Q[m[j]]);
          double dr = signed_distance(scores_R[m[i]], scores_R[m[j]]);
          if (std::abs(dq - dr) > epsilon) ++violations;
        }
      }
    } else {
      Rng r(derive_seed(opt.subsample_seed, g));
      std::size_t hits = 0;
      for (std::size_t s = 0; s < opt.subsample_pairs; ++s) {
        std::size_t i = static_cast<std::size_t>(r.below(n));
        std::size_t j = static_cast<std::size_t>(r.below(n - 1));
        if (j >= i) ++j;
        double dq = signed_distance(scores_Q[m[i]], scores_Q[m[j]]);
        double dr = signed_distance(scores_R[m[i]], scores_R[m[j]]);
        if (std::abs(dq - dr) > epsilon) ++hits;
      }
      double p = static_cast<double>(hits) / static_cast<double>(opt.subsample_pairs);
      // contribute the group's pair mass at the estimated rate
      double w = static_cast<double>(gi.pair_count(g));
      est.subsampled = true;
      est.value += p * w;
      subsample_var += w * w * p * (1.0 - p) /
                       static_cast<double>(opt.subsample_pairs);
    }
  }
  double denom = static_cast<double>(total_pairs);
  est.value = (est.value + static_cast<double>(violations)) / denom;
  est.standard_error = est.subsampled ? std::sqrt(subsample_var) / denom : 0.0;
  return est;
}

inline double delta_wgf(const std::vector<double>& scores_Q,
                        const std::vector<double>& scores_R,
                        const std::vector<int>& groups, double epsilon,
                        const WgfOptions& opt = {}) {
  return delta_wgf_estimate(scores_Q, scores_R, groups, epsilon, opt).value;
}

inline std::pair<std::vector<std::pair<double, double>>, double> wgf_curve(
    const std::vector<double>& scores_Q, const std::vector<double>& scores_R,
    const std::vector<int>& groups, std::size_t grid_size = 51,
    const WgfOptions& opt = {}) {
  require(grid_size >= 2, errc::argument, "grid_size must be >= 2");
  std::vector<std::pair<double, double>> curve(grid_size);
  double sum = 0.0;
  for (std::size_t i = 0; i < grid_size; ++i) {
    double eps = 0.5 * static_cast<double>(i) / static_cast<double>(grid_size - 1);
    double v = delta_wgf(scores_Q, scores_R, groups, eps, opt);
    curve[i] = {eps, v};
    sum += v;
  }
  return {std::move(curve), sum / static_cast<double>(grid_size)};
}

struct Performance {
  double accuracy_at_half = 0.0;
  double auc = 0.0;
};

inline Performance performance(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
  require(scores.size() == labels.size(), errc::dimension_mismatch,
          "scores vs labels length");
  require(!scores.empty(), errc::empty_input, "performance on empty input");
  Performance perf;
  std::size_t correct = 0, pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    int pred = scores[i] > 0.5 ? 1 : 0;  // Eq. 1 strict rule at t = 0.5
    correct += pred == labels[i] ? 1 : 0;
    pos += labels[i] ? 1 : 0;
  }
  perf.accuracy_at_half =
      static_cast<double>(correct) / static_cast<double>(scores.size());
  require(pos > 0 && pos < scores.size(), errc::undefined_metric,
          "AUC undefined with a single class (accuracy " +
              std::to_string(perf.accuracy_at_half) + ")");

  // Mann-Whitney with midranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double midrank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]]) rank_sum_pos += midrank;
    i = j + 1;
  }
  double n1 = static_cast<double>(pos);
  double n0 = static_cast<double>(scores.size() - pos);
  perf.auc = (rank_sum_pos - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
  return perf;
}

// Kendall tau-b between two score vectors (used for the within-group order
// preservation diagnostic).  O(n^2) pair walk — fine at test-partition sizes.
inline double kendall_tau(const std::vector<double>& a,
                          const std::vector<double>& b) {
  require(a.size() == b.size(), errc::dimension_mismatch, "kendall_tau lengths");
  require(a.size() >= 2, errc::argument, "kendall_tau needs >= 2 points");
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0.0 && db == 0.0) continue;
      if (da == 0.0) { ++ties_a; continue; }
      if (db == 0.0) { ++ties_b; continue; }
      if ((da > 0) == (db > 0)) ++concordant;
      else ++discordant;
    }
  }
  double n0 = static_cast<double>(concordant + discordant + ties_a);
  double n1 = static_cast<double>(concordant + discordant + ties_b);
  require(n0 > 0 && n1 > 0, errc::undefined_metric, "kendall_tau degenerate input");
  return static_cast<double>(concordant - discordant) / std::sqrt(n0 * n1);
}

inline FairnessReport make_report(const std::vector<double>& Q_g1,
                                  const std::vector<double>& Q_g2,
                                  const std::vector<double>& scores_Q,
                                  const std::vector<double>& scores_R,
                                  const std::vector<int>& groups,
                                  const std::vector<int>& labels,
                                  std::size_t tidp_grid = 1001,
                                  std::size_t wgf_grid = 51) {
  FairnessReport rep;
  auto [cv, tidp] = delta_tidp(Q_g1, Q_g2, tidp_grid);
  rep.cv_curve = std::move(cv);
  rep.delta_tidp = tidp;
  auto [wc, wavg] = wgf_curve(scores_Q, scores_R, groups, wgf_grid);
  rep.wgf_curve = std::move(wc);
  rep.delta_wgf_avg = wavg;
  Performance perf = performance(scores_Q, labels);
  rep.accuracy_at_half = perf.accuracy_at_half;
  rep.auc = perf.auc;
  return rep;
}

}  // namespace fairmap::metrics
