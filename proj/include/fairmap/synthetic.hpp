// Synthetic two-group generators used by the experiment harness and the
// sweep/acceptance drivers.  Both families draw a per-row target score,
// place the feature vector on the logit of that score plus isotropic noise,
// and sample the label from the target score — so a perfect model recovers
// starget and the group gap is exactly the score-distribution gap.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fairmap/core.hpp"
#include "fairmap/dataset.hpp"

namespace fairmap::synthetic {

enum class Family { uniform_translate, gaussian };

struct SyntheticConfig {
  Family family = Family::uniform_translate;
  std::size_t n_per_group = 1000;
  std::size_t dim = 10;
  double score_shift = 0.2;  // uniform: translation; gaussian: center gap
  double score_sd = 0.15;    // gaussian family only
  double noise_sd = 0.4;     // feature noise around the logit
  double label_noise = 0.0;  // Bernoulli label flip probability
  // When > 0, the last dimension carries no label signal: it is
  // proxy_gap * (+1 / -1 by group) + N(0,1).  Signal lives in the first
  // dim-1 coordinates.  A baseline trained on labels ignores it; a
  // fairness-regularized fine-tuner can use it to close the score gap.
  double proxy_gap = 0.0;
  std::uint64_t seed = 0;
};

inline Family family_from_name(const std::string& s) {
  if (s == "uniform_translate") return Family::uniform_translate;
  if (s == "gaussian") return Family::gaussian;
  fail(errc::argument, "unknown synthetic family '" + s + "'");
}

inline const char* family_name(Family f) {
  return f == Family::uniform_translate ? "uniform_translate" : "gaussian";
}

inline ingest::Dataset generate(const SyntheticConfig& cfg) {
  require(cfg.n_per_group >= 1, errc::argument, "n_per_group must be >= 1");
  require(cfg.dim >= 1, errc::argument, "dim must be >= 1");
  require(cfg.noise_sd >= 0.0, errc::argument, "noise_sd must be >= 0");
  require(cfg.label_noise >= 0.0 && cfg.label_noise <= 1.0, errc::argument,
          "label_noise must lie in [0,1]");
  require(cfg.proxy_gap == 0.0 || cfg.dim >= 2, errc::argument,
          "proxy dimension needs dim >= 2");
  if (cfg.family == Family::uniform_translate)
    require(cfg.score_shift >= 0.0 && cfg.score_shift < 1.0, errc::argument,
            "uniform_translate needs score_shift in [0,1)");
  else
    require(cfg.score_sd > 0.0, errc::argument, "gaussian needs score_sd > 0");

  const std::size_t n = 2 * cfg.n_per_group;
  const std::size_t sig_dims = cfg.proxy_gap > 0.0 ? cfg.dim - 1 : cfg.dim;
  Rng rng(cfg.seed);

  ingest::Dataset ds;
  ds.features = Matrix(n, cfg.dim);
  ds.labels.resize(n);
  ds.groups.resize(n);
  ds.source_rows.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    int g = i < cfg.n_per_group ? 1 : 2;
    double starget;
    if (cfg.family == Family::uniform_translate) {
      // Group 1 occupies [shift, 1], group 2 occupies [0, 1-shift]: a pure
      // translation of a width-(1-shift) uniform.
      double u = rng.uniform();
      double w = 1.0 - cfg.score_shift;
      starget = g == 1 ? cfg.score_shift + w * u : w * u;
    } else {
      double center = g == 1 ? 0.5 + cfg.score_shift / 2.0
                             : 0.5 - cfg.score_shift / 2.0;
      starget = center + cfg.score_sd * rng.normal();
    }
    starget = std::clamp(starget, 1e-6, 1.0 - 1e-6);
    double m = std::log(starget / (1.0 - starget));
    for (std::size_t j = 0; j < sig_dims; ++j)
      ds.features(i, j) = m + cfg.noise_sd * rng.normal();
    if (cfg.proxy_gap > 0.0)
      ds.features(i, cfg.dim - 1) =
          cfg.proxy_gap * (g == 1 ? 1.0 : -1.0) + rng.normal();
    int y = rng.uniform() < starget ? 1 : 0;
    if (cfg.label_noise > 0.0 && rng.uniform() < cfg.label_noise) y = 1 - y;
    ds.labels[i] = y;
    ds.groups[i] = g;
    ds.source_rows[i] = i;
  }

  ds.schema.sensitive_column = "group";
  ds.schema.label_column = "label";
  ds.schema.group_values = {"1", "2"};
  for (std::size_t j = 0; j < cfg.dim; ++j)
    ds.schema.columns.push_back(
        {"f" + std::to_string(j), ingest::ColumnKind::numeric});
  ds.check_consistent();
  return ds;
}

}  // namespace fairmap::synthetic
