// distribution_matching: fixed-range [0,1] score histograms and histogram
// specification (the monotone transform of Phase II).
#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "fairmap/core.hpp"

namespace fairmap::distmatch {

struct ScoreHistogram {
  std::vector<double> bin_edges;  // B+1 edges spanning exactly [0,1]
  std::vector<double> counts;     // B
  std::vector<double> cdf;        // B, nondecreasing, ends at 1
};

inline std::size_t bin_of(double s, std::size_t B) {
  // Scores live in [0,1]; exactly 1.0 belongs to the last bin.
  double scaled = s * static_cast<double>(B);
  if (scaled < 0.0) scaled = 0.0;
  std::size_t b = static_cast<std::size_t>(scaled);
  return b >= B ? B - 1 : b;
}

inline ScoreHistogram build_histogram(const std::vector<double>& scores,
                                      std::size_t bins) {
  require(bins >= 2, errc::argument, "need at least 2 bins");
  require(!scores.empty(), errc::empty_input, "no scores to histogram");
  ScoreHistogram h;
  h.bin_edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.bin_edges[i] = static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0.0);
  for (double s : scores) h.counts[bin_of(s, bins)] += 1.0;
  h.cdf.resize(bins);
  double total = static_cast<double>(scores.size());
  double acc = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    acc += h.counts[b];
    h.cdf[b] = acc / total;
  }
  h.cdf[bins - 1] = 1.0;  // kill fp residue; cdf must end at exactly 1
  return h;
}

namespace detail {

// Empirical CDF at histogram resolution: the cdf value of the bin containing
// s (mass up to that bin's right edge).  This is the classical histogram-
// specification forward map; interpolating F instead would pin F(s) to the
// cdf plateau *below* s's bin and collapse the reference lookup one quantile
// early whenever s sits on a bin edge.
inline double cdf_at(const ScoreHistogram& h, double s) {
  return h.cdf[bin_of(s, h.counts.size())];
}

// Generalized inverse: smallest bin right-edge whose cdf reaches p, linearly
// interpolated inside that bin.  Because we take the *first* bin b with
// cdf[b] >= p, the in-bin mass is positive whenever p exceeds the running cdf
// (the zero-mass case is only reachable at p <= 0-mass prefixes; map those to
// the bin's left edge).
inline double inv_cdf_at(const ScoreHistogram& h, double p) {
  std::size_t B = h.counts.size();
  auto it = std::lower_bound(h.cdf.begin(), h.cdf.end(), p);
  std::size_t b = it == h.cdf.end() ? B - 1
                                    : static_cast<std::size_t>(it - h.cdf.begin());
  double prev = b == 0 ? 0.0 : h.cdf[b - 1];
  double mass = h.cdf[b] - prev;
  double frac = mass > 0.0 ? std::clamp((p - prev) / mass, 0.0, 1.0) : 0.0;
  return h.bin_edges[b] + frac * (h.bin_edges[b + 1] - h.bin_edges[b]);
}

}  // namespace detail

// output[i] = G^{-1}(F(source[i])): source values are pushed through their own
// empirical CDF and pulled back through the reference's.  Nondecreasing in the
// input, so group score order survives (ties map to equal outputs).
inline std::vector<double> histogram_specify(const std::vector<double>& source,
                                             const std::vector<double>& reference,
                                             std::size_t bins) {
  require(bins >= 2, errc::argument, "need at least 2 bins");
  require(!source.empty() && !reference.empty(), errc::empty_input,
          "histogram_specify needs nonempty source and reference");
  ScoreHistogram F = build_histogram(source, bins);
  ScoreHistogram G = build_histogram(reference, bins);
  std::vector<double> out(source.size());
  for (std::size_t i = 0; i < source.size(); ++i)
    out[i] = detail::inv_cdf_at(G, detail::cdf_at(F, source[i]));
  return out;
}

}  // namespace fairmap::distmatch
