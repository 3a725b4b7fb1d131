// regularizers: EMD and symmetric Gaussian-KL fairness penalties on the two
// group score distributions, fine-tuning from a trained baseline, and lambda
// sweeps.  All gradients here are analytic and finite-difference-checked in
// the suite.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fairmap/core.hpp"
#include "fairmap/dataset.hpp"
#include "fairmap/metrics.hpp"
#include "fairmap/scoring.hpp"

namespace fairmap::regularizers {

enum class RegKind { emd, kl_gaussian };

struct RegularizerConfig {
  RegKind kind = RegKind::emd;
  double lambda = 0.0;
  std::size_t bin_count = 50;    // emd only
  double bandwidth = 1.0 / 100;  // emd only; default 1/(2C)
};

inline const char* reg_kind_name(RegKind k) {
  return k == RegKind::emd ? "emd" : "kl_gaussian";
}

// ---------------------------------------------------------------------------
// Soft histogram.  Each score spreads a unit of mass over the C bin centers
// with a Gaussian kernel, normalized per score so truncation at [0,1] never
// leaks mass; the bin vector therefore sums to exactly 1 (the "renormalized"
// contract) and stays differentiable in every score.

namespace detail {

struct SoftHist {
  std::vector<double> p;       // C bin masses, sum 1
  Matrix kernel;               // N x C, row-normalized kernel weights
  std::vector<double> row_sum;  // N raw row sums (for gradients)
  Matrix raw;                  // N x C unnormalized kernels
};

inline SoftHist soft_histogram_full(const std::vector<double>& scores,
                                    std::size_t C, double bandwidth) {
  require(C >= 2, errc::argument, "bin_count must be >= 2");
  require(bandwidth > 0.0, errc::argument, "bandwidth must be > 0");
  require(!scores.empty(), errc::empty_input, "soft_histogram on empty scores");
  const std::size_t n = scores.size();
  SoftHist h;
  h.raw = Matrix(n, C);
  h.kernel = Matrix(n, C);
  h.row_sum.resize(n);
  h.p.assign(C, 0.0);
  const double inv2b2 = 1.0 / (2.0 * bandwidth * bandwidth);
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      double center = (static_cast<double>(c) + 0.5) / static_cast<double>(C);
      double d = center - scores[i];
      double v = std::exp(-d * d * inv2b2);
      h.raw(i, c) = v;
      rs += v;
    }
    h.row_sum[i] = rs;
    for (std::size_t c = 0; c < C; ++c) {
      double kv = h.raw(i, c) / rs;
      h.kernel(i, c) = kv;
      h.p[c] += kv;
    }
  }
  for (double& v : h.p) v /= static_cast<double>(n);
  return h;
}

}  // namespace detail

inline std::vector<double> soft_histogram(const std::vector<double>& scores,
                                          std::size_t C, double bandwidth) {
  return detail::soft_histogram_full(scores, C, bandwidth).p;
}

// Jacobian d p_c / d score_i (N x C); exposed for the finite-difference oracle.
inline Matrix soft_histogram_jacobian(const std::vector<double>& scores,
                                      std::size_t C, double bandwidth) {
  auto h = detail::soft_histogram_full(scores, C, bandwidth);
  const std::size_t n = scores.size();
  const double b2 = bandwidth * bandwidth;
  Matrix J(n, C);
  for (std::size_t i = 0; i < n; ++i) {
    // dA_ic/ds_i = A_ic (center_c - s_i)/b^2; K = A/r ->
    // dK_ic = (dA_ic * r - A_ic * dr) / r^2
    double drow = 0.0;
    std::vector<double> dA(C);
    for (std::size_t c = 0; c < C; ++c) {
      double center = (static_cast<double>(c) + 0.5) / static_cast<double>(C);
      dA[c] = h.raw(i, c) * (center - scores[i]) / b2;
      drow += dA[c];
    }
    double r = h.row_sum[i];
    for (std::size_t c = 0; c < C; ++c)
      J(i, c) = (dA[c] * r - h.raw(i, c) * drow) / (r * r) /
                static_cast<double>(n);
  }
  return J;
}

// ---------------------------------------------------------------------------
// EMD = sum_n (CDF_n(h_i) - CDF_n(h_j))^2 on the soft histograms.

namespace detail {

// Per-score gradient for one side: dE/ds = J_side^T suffix, computed without
// materializing the Jacobian.
inline void emd_grad_side(const SoftHist& h, const std::vector<double>& scores,
                          const std::vector<double>& suffix, double bandwidth,
                          double sign, std::vector<double>& out) {
  const std::size_t n = scores.size();
  const std::size_t C = h.p.size();
  const double b2 = bandwidth * bandwidth;
  out.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double drow = 0.0;
    double acc = 0.0;
    // two passes: dA row sum, then the projected derivative
    for (std::size_t c = 0; c < C; ++c) {
      double center = (static_cast<double>(c) + 0.5) / static_cast<double>(C);
      drow += h.raw(i, c) * (center - scores[i]) / b2;
    }
    double r = h.row_sum[i];
    for (std::size_t c = 0; c < C; ++c) {
      double center = (static_cast<double>(c) + 0.5) / static_cast<double>(C);
      double dA = h.raw(i, c) * (center - scores[i]) / b2;
      double dK = (dA * r - h.raw(i, c) * drow) / (r * r);
      acc += dK * suffix[c];
    }
    out[i] = sign * acc / static_cast<double>(n);
  }
}

struct RegValueGrad {
  double value = 0.0;
  std::vector<double> grad_i, grad_j;  // d value / d score, per side
};

inline RegValueGrad emd_value_grad(const std::vector<double>& si,
                                   const std::vector<double>& sj,
                                   std::size_t C, double bandwidth,
                                   bool want_grad) {
  auto hi = soft_histogram_full(si, C, bandwidth);
  auto hj = soft_histogram_full(sj, C, bandwidth);
  std::vector<double> diff(C);
  double ci = 0.0, cj = 0.0;
  RegValueGrad out;
  for (std::size_t c = 0; c < C; ++c) {
    ci += hi.p[c];
    cj += hj.p[c];
    diff[c] = ci - cj;
    out.value += diff[c] * diff[c];
  }
  if (!want_grad) return out;
  // dE/dp_c = sum_{m >= c} 2 diff_m (suffix sums)
  std::vector<double> suffix(C);
  double acc = 0.0;
  for (std::size_t c = C; c-- > 0;) {
    acc += 2.0 * diff[c];
    suffix[c] = acc;
  }
  emd_grad_side(hi, si, suffix, bandwidth, +1.0, out.grad_i);
  emd_grad_side(hj, sj, suffix, bandwidth, -1.0, out.grad_j);
  return out;
}

inline RegValueGrad kl_value_grad(const std::vector<double>& si,
                                  const std::vector<double>& sj,
                                  bool want_grad) {
  require(si.size() >= 2 && sj.size() >= 2, errc::argument,
          "kl_gaussian needs >= 2 points per group");
  auto moments = [](const std::vector<double>& s, double& mu, double& var) {
    mu = 0.0;
    for (double v : s) mu += v;
    mu /= static_cast<double>(s.size());
    var = 0.0;
    for (double v : s) var += (v - mu) * (v - mu);
    var /= static_cast<double>(s.size());  // population convention
  };
  double mu1, v1, mu2, v2;
  moments(si, mu1, v1);
  moments(sj, mu2, v2);
  require(v1 > 0.0 && v2 > 0.0, errc::degenerate_distribution,
          "kl_gaussian needs nonzero variance in both groups");
  double D = mu1 - mu2;
  RegValueGrad out;
  out.value = 0.5 * ((v1 + D * D) / v2 + (v2 + D * D) / v1) - 1.0;
  if (!want_grad) return out;
  // Closed-form partials, then chain through mu-hat and sigma-hat^2.
  double dmu1 = D * (1.0 / v2 + 1.0 / v1);
  double dmu2 = -dmu1;
  double dv1 = 0.5 * (1.0 / v2 - (v2 + D * D) / (v1 * v1));
  double dv2 = 0.5 * (1.0 / v1 - (v1 + D * D) / (v2 * v2));
  double n1 = static_cast<double>(si.size());
  double n2 = static_cast<double>(sj.size());
  out.grad_i.resize(si.size());
  out.grad_j.resize(sj.size());
  for (std::size_t i = 0; i < si.size(); ++i)
    out.grad_i[i] = dmu1 / n1 + dv1 * 2.0 * (si[i] - mu1) / n1;
  for (std::size_t j = 0; j < sj.size(); ++j)
    out.grad_j[j] = dmu2 / n2 + dv2 * 2.0 * (sj[j] - mu2) / n2;
  return out;
}

inline RegValueGrad reg_value_grad(const std::vector<double>& si,
                                   const std::vector<double>& sj,
                                   const RegularizerConfig& cfg, bool want_grad) {
  return cfg.kind == RegKind::emd
             ? emd_value_grad(si, sj, cfg.bin_count, cfg.bandwidth, want_grad)
             : kl_value_grad(si, sj, want_grad);
}

}  // namespace detail

inline double emd_regularizer(const std::vector<double>& scores_i,
                              const std::vector<double>& scores_j,
                              const RegularizerConfig& config) {
  require(!scores_i.empty() && !scores_j.empty(), errc::empty_input,
          "emd_regularizer needs nonempty groups");
  return detail::emd_value_grad(scores_i, scores_j, config.bin_count,
                                config.bandwidth, false)
      .value;
}

inline double kl_gaussian_regularizer(const std::vector<double>& scores_i,
                                      const std::vector<double>& scores_j) {
  return detail::kl_value_grad(scores_i, scores_j, false).value;
}

// ---------------------------------------------------------------------------
// Fine-tuning: gradient descent on L + lambda * E from theta_base.

struct FinetuneTrace {
  std::vector<double> loss;  // data loss per epoch (at epoch start)
  std::vector<double> reg;   // E per epoch (at epoch start; 0 when lambda = 0)
};

inline scoring::ScoringModel finetune(const scoring::ScoringModel& base,
                                      const ingest::Dataset& train,
                                      const RegularizerConfig& config,
                                      const scoring::TrainConfig& tconfig,
                                      FinetuneTrace* trace = nullptr) {
  train.check_consistent();
  require(config.lambda >= 0.0, errc::argument, "lambda must be >= 0");
  auto ids = train.group_ids();
  require(ids.size() == 2, errc::argument,
          "finetune requires exactly 2 groups, got " + std::to_string(ids.size()));
  require(train.dim() == base.input_dim(), errc::dimension_mismatch,
          "train width vs base model input");

  std::vector<std::size_t> idx1, idx2;
  for (std::size_t i = 0; i < train.size(); ++i)
    (train.groups[i] == ids[0] ? idx1 : idx2).push_back(i);

  scoring::ScoringModel model = base;
  const bool mlp = model.kind == scoring::ModelKind::mlp_3layer;
  const Matrix& X = train.features;
  std::vector<double> m, dm, grad;
  Matrix A1, A2;

  for (int epoch = 0; epoch < tconfig.epochs; ++epoch) {
    scoring::detail::forward_margins(model, X, m, mlp ? &A1 : nullptr,
                                     mlp ? &A2 : nullptr);
    double L = scoring::detail::data_loss_dm(model, m, train.labels, dm);
    double E = 0.0;
    if (config.lambda > 0.0) {
      // E sees the scores, so chain sigma'(m) = s(1-s) into the margin grads.
      std::vector<double> s(m.size()), s1(idx1.size()), s2(idx2.size());
      for (std::size_t i = 0; i < m.size(); ++i) s[i] = scoring::sigmoid(m[i]);
      for (std::size_t i = 0; i < idx1.size(); ++i) s1[i] = s[idx1[i]];
      for (std::size_t i = 0; i < idx2.size(); ++i) s2[i] = s[idx2[i]];
      auto vg = detail::reg_value_grad(s1, s2, config, true);
      E = vg.value;
      for (std::size_t i = 0; i < idx1.size(); ++i) {
        double si = s1[i];
        dm[idx1[i]] += config.lambda * vg.grad_i[i] * si * (1.0 - si);
      }
      for (std::size_t i = 0; i < idx2.size(); ++i) {
        double sj = s2[i];
        dm[idx2[i]] += config.lambda * vg.grad_j[i] * sj * (1.0 - sj);
      }
    }
    if (!std::isfinite(L) || !std::isfinite(E))
      fail(errc::training_divergence,
           "non-finite objective at fine-tune epoch " + std::to_string(epoch));
    if (trace) {
      trace->loss.push_back(L);
      trace->reg.push_back(E);
    }
    grad.assign(model.params.size(), 0.0);
    scoring::detail::backprop_margins(model, X, dm, A1, A2, grad);
    scoring::detail::add_decay_gradient(model, grad);
    for (std::size_t j = 0; j < grad.size(); ++j)
      model.params[j] -= tconfig.learning_rate * grad[j];
  }
  for (double p : model.params)
    if (!std::isfinite(p))
      fail(errc::training_divergence, "non-finite parameter after fine-tuning");
  model.training_loss = trace ? trace->loss : std::vector<double>{};
  return model;
}

// Full objective (L + lambda E) value and parameter gradient at the current
// params — the combined-objective finite-difference oracle target.
inline double objective_and_gradient(const scoring::ScoringModel& model,
                                     const ingest::Dataset& train,
                                     const RegularizerConfig& config,
                                     std::vector<double>* grad = nullptr) {
  auto ids = train.group_ids();
  require(ids.size() == 2, errc::argument, "objective needs exactly 2 groups");
  std::vector<std::size_t> idx1, idx2;
  for (std::size_t i = 0; i < train.size(); ++i)
    (train.groups[i] == ids[0] ? idx1 : idx2).push_back(i);
  const bool mlp = model.kind == scoring::ModelKind::mlp_3layer;
  std::vector<double> m, dm;
  Matrix A1, A2;
  scoring::detail::forward_margins(model, train.features, m, mlp ? &A1 : nullptr,
                                   mlp ? &A2 : nullptr);
  double L = scoring::detail::data_loss_dm(model, m, train.labels, dm);
  double E = 0.0;
  if (config.lambda > 0.0) {
    std::vector<double> s1(idx1.size()), s2(idx2.size());
    for (std::size_t i = 0; i < idx1.size(); ++i)
      s1[i] = scoring::sigmoid(m[idx1[i]]);
    for (std::size_t i = 0; i < idx2.size(); ++i)
      s2[i] = scoring::sigmoid(m[idx2[i]]);
    auto vg = detail::reg_value_grad(s1, s2, config, grad != nullptr);
    E = vg.value;
    if (grad) {
      for (std::size_t i = 0; i < idx1.size(); ++i) {
        double si = s1[i];
        dm[idx1[i]] += config.lambda * vg.grad_i[i] * si * (1.0 - si);
      }
      for (std::size_t i = 0; i < idx2.size(); ++i) {
        double sj = s2[i];
        dm[idx2[i]] += config.lambda * vg.grad_j[i] * sj * (1.0 - sj);
      }
    }
  }
  if (grad) {
    grad->assign(model.params.size(), 0.0);
    scoring::detail::backprop_margins(model, train.features, dm, A1, A2, *grad);
    scoring::detail::add_decay_gradient(model, *grad);
  }
  return L + config.lambda * E;
}

// ---------------------------------------------------------------------------
// Lambda sweep.

struct SweepRow {
  RegKind kind = RegKind::emd;
  double lambda = 0.0;
  int trial = 0;
  double delta_tidp = 0.0;
  double delta_wgf_avg = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;
};

struct SweepSummary {
  double lambda = 0.0;
  double tidp_mean = 0.0, tidp_std = 0.0;
  double wgf_mean = 0.0, wgf_std = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;

  // CSV emission, one row per (kind, lambda, trial) cell.
  void write_csv(std::ostream& os) const {
    os << "kind,lambda,trial,delta_tidp,delta_wgf_avg,accuracy,auc\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%d,%.17g,%.17g,%.17g,%.17g\n",
                    reg_kind_name(r.kind), r.lambda, r.trial, r.delta_tidp,
                    r.delta_wgf_avg, r.accuracy, r.auc);
      os << buf;
    }
  }

  void to_csv(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(errc::io, "cannot open sweep csv for writing: " + path);
    write_csv(os);
    if (!os) fail(errc::io, "short write on sweep csv: " + path);
  }

  std::vector<SweepSummary> summarize() const {
    std::vector<SweepSummary> out;
    std::vector<double> lambdas;
    for (const auto& r : rows)
      if (std::find(lambdas.begin(), lambdas.end(), r.lambda) == lambdas.end())
        lambdas.push_back(r.lambda);
    for (double lam : lambdas) {
      std::vector<double> tidps, wgfs;
      for (const auto& r : rows)
        if (r.lambda == lam) {
          tidps.push_back(r.delta_tidp);
          wgfs.push_back(r.delta_wgf_avg);
        }
      auto mean_std = [](const std::vector<double>& v) {
        double mu = 0.0;
        for (double x : v) mu += x;
        mu /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mu) * (x - mu);
        var /= static_cast<double>(v.size());
        return std::pair<double, double>{mu, std::sqrt(var)};
      };
      SweepSummary s;
      s.lambda = lam;
      std::tie(s.tidp_mean, s.tidp_std) = mean_std(tidps);
      std::tie(s.wgf_mean, s.wgf_std) = mean_std(wgfs);
      out.push_back(s);
    }
    return out;
  }
};

// One sweep cell evaluated on test data: fine-tune at lambda, then measure
// against the baseline scores R.
inline SweepRow sweep_cell(const scoring::ScoringModel& base,
                           const ingest::Dataset& train,
                           const ingest::Dataset& test, RegKind kind,
                           double lambda, int trial,
                           const scoring::TrainConfig& ft) {
  RegularizerConfig rc;
  rc.kind = kind;
  rc.lambda = lambda;
  scoring::TrainConfig cell_cfg = ft;
  cell_cfg.seed = derive_seed(ft.seed, static_cast<std::uint64_t>(trial));
  scoring::ScoringModel tuned = finetune(base, train, rc, cell_cfg);
  std::vector<double> Q = scoring::score(tuned, test.features);
  std::vector<double> R = scoring::score(base, test.features);
  auto ids = test.group_ids();
  require(ids.size() == 2, errc::argument, "sweep test data needs 2 groups");
  std::vector<double> q1, q2;
  for (std::size_t i = 0; i < Q.size(); ++i)
    (test.groups[i] == ids[0] ? q1 : q2).push_back(Q[i]);
  SweepRow row;
  row.kind = kind;
  row.lambda = lambda;
  row.trial = trial;
  row.delta_tidp = metrics::delta_tidp(q1, q2).second;
  row.delta_wgf_avg = metrics::wgf_curve(Q, R, test.groups).second;
  auto perf = metrics::performance(Q, test.labels);
  row.accuracy = perf.accuracy_at_half;
  row.auc = perf.auc;
  return row;
}

// Spec-surface sweep over a fixed (base, train, test).  With full-batch
// deterministic fine-tuning the trials coincide (std 0); real trial noise
// comes from the provider overload below, which regenerates data + baseline
// per trial.
inline SweepTable lambda_sweep(const scoring::ScoringModel& base,
                               const ingest::Dataset& train,
                               const ingest::Dataset& test, RegKind kind,
                               const std::vector<double>& lambdas, int trials,
                               const scoring::TrainConfig& ft) {
  require(!lambdas.empty(), errc::argument, "lambda grid is empty");
  require(trials >= 1, errc::argument, "trials must be >= 1");
  SweepTable table;
  for (double lam : lambdas)
    for (int t = 0; t < trials; ++t)
      table.rows.push_back(sweep_cell(base, train, test, kind, lam, t, ft));
  return table;
}

struct SweepTrial {
  scoring::ScoringModel base;
  ingest::Dataset train;
  ingest::Dataset test;
};

// Paired-trial sweep: the provider materializes (data, baseline) for a trial
// seed; every lambda runs against that same pair, so per-lambda means carry
// i.i.d. trial noise and comparisons across lambda are paired.
inline SweepTable lambda_sweep(
    const std::function<SweepTrial(int trial)>& provider, RegKind kind,
    const std::vector<double>& lambdas, int trials,
    const scoring::TrainConfig& ft) {
  require(!lambdas.empty(), errc::argument, "lambda grid is empty");
  require(trials >= 1, errc::argument, "trials must be >= 1");
  SweepTable table;
  for (int t = 0; t < trials; ++t) {
    SweepTrial trial = provider(t);
    for (double lam : lambdas)
      table.rows.push_back(
          sweep_cell(trial.base, trial.train, trial.test, kind, lam, t, ft));
  }
  return table;
}

}  // namespace fairmap::regularizers
