// scoring: baseline models s_theta(x) = sigmoid(m_theta(x)) trained by
// gradient descent — logistic regression, a 3-layer tanh MLP, and a linear
// margin model on hinge loss.  Analytic gradients throughout (they are
// finite-difference-checked in the test suite).
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fairmap/core.hpp"
#include "fairmap/dataset.hpp"

namespace fairmap::scoring {

enum class ModelKind { logistic_regression, mlp_3layer, margin };
enum class LossKind { cross_entropy, hinge };

struct TrainConfig {
  double learning_rate = 0.05;  // paper-reported range [1e-4, 1e-1]
  int epochs = 500;
  std::uint64_t seed = 0;
  std::size_t batch = 0;        // 0 = full batch
  double weight_decay = 1e-4;   // L2 on weights; used by the margin kind only
};

struct ScoringModel {
  ModelKind kind = ModelKind::logistic_regression;
  LossKind loss = LossKind::cross_entropy;
  std::vector<std::pair<std::size_t, std::size_t>> layer_shapes;  // (in, out)
  std::vector<double> params;   // weights then bias, layer by layer
  double weight_decay = 0.0;    // frozen from TrainConfig for margin models
  std::vector<double> training_loss;  // per-epoch objective at epoch start

  std::size_t input_dim() const {
    return layer_shapes.empty() ? 0 : layer_shapes.front().first;
  }

  static std::size_t param_count(
      const std::vector<std::pair<std::size_t, std::size_t>>& shapes) {
    std::size_t n = 0;
    for (auto [in, out] : shapes) n += in * out + out;
    return n;
  }
};

inline double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

// Scores must stay strictly inside (0,1); sigmoid saturates to exact 0/1 in
// double arithmetic for |m| large.
constexpr double score_floor = 1e-300;
inline const double score_ceil = 1.0 - 0x1.0p-53;

inline double clamp_score(double s) {
  return std::clamp(s, score_floor, score_ceil);
}

namespace detail {

// Raw margins m_theta(x) for all rows, optionally capturing hidden
// activations (needed by backprop).
inline void forward_margins(const ScoringModel& model, const Matrix& X,
                            std::vector<double>& m, Matrix* h1_out = nullptr,
                            Matrix* h2_out = nullptr) {
  const std::size_t n = X.rows();
  m.assign(n, 0.0);
  if (model.kind != ModelKind::mlp_3layer) {
    const std::size_t k = model.layer_shapes[0].first;
    const double* w = model.params.data();
    const double b = model.params[k];
    for (std::size_t i = 0; i < n; ++i) {
      double acc = b;
      const double* x = X.row(i);
      for (std::size_t j = 0; j < k; ++j) acc += x[j] * w[j];
      m[i] = acc;
    }
    return;
  }
  const auto [k, h1] = model.layer_shapes[0];
  const auto h2 = model.layer_shapes[1].second;
  const double* W1 = model.params.data();
  const double* b1 = W1 + k * h1;
  const double* W2 = b1 + h1;
  const double* b2 = W2 + h1 * h2;
  const double* W3 = b2 + h2;
  const double* b3 = W3 + h2;
  Matrix A1(n, h1), A2(n, h2);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = X.row(i);
    for (std::size_t j = 0; j < h1; ++j) {
      double acc = b1[j];
      for (std::size_t l = 0; l < k; ++l) acc += x[l] * W1[l * h1 + j];
      A1(i, j) = std::tanh(acc);
    }
    for (std::size_t j = 0; j < h2; ++j) {
      double acc = b2[j];
      for (std::size_t l = 0; l < h1; ++l) acc += A1(i, l) * W2[l * h2 + j];
      A2(i, j) = std::tanh(acc);
    }
    double acc = b3[0];
    for (std::size_t l = 0; l < h2; ++l) acc += A2(i, l) * W3[l];
    m[i] = acc;
  }
  if (h1_out) *h1_out = std::move(A1);
  if (h2_out) *h2_out = std::move(A2);
}

// Data-term loss and its per-row margin derivative.  The margin kind's
// objective includes its 0.5 * decay * |w|^2 term here (value side); the
// matching parameter-space decay gradient is added by add_decay_gradient.
inline double data_loss_dm(const ScoringModel& model, const std::vector<double>& m,
                           const std::vector<int>& y, std::vector<double>& dm) {
  const std::size_t n = m.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  dm.assign(n, 0.0);
  double loss = 0.0;
  if (model.loss == LossKind::cross_entropy) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = sigmoid(m[i]);
      double sc = std::clamp(s, 1e-12, 1.0 - 1e-12);
      loss -= y[i] ? std::log(sc) : std::log(1.0 - sc);
      dm[i] = (s - static_cast<double>(y[i])) * inv_n;
    }
    loss *= inv_n;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double t = 2.0 * y[i] - 1.0;
      double margin = t * m[i];
      if (margin < 1.0) {
        loss += 1.0 - margin;
        dm[i] = -t * inv_n;
      }
    }
    loss *= inv_n;
    const std::size_t k = model.layer_shapes[0].first;
    double wsq = 0.0;
    for (std::size_t j = 0; j < k; ++j) wsq += model.params[j] * model.params[j];
    loss += 0.5 * model.weight_decay * wsq;
  }
  return loss;
}

// Accumulates d(sum_i dm_i * m_i(theta)) / d theta into grad (which must be
// pre-sized and zeroed by the caller).  A1/A2 are the cached tanh activations
// from forward_margins (mlp only).
inline void backprop_margins(const ScoringModel& model, const Matrix& X,
                             const std::vector<double>& dm, const Matrix& A1,
                             const Matrix& A2, std::vector<double>& g) {
  const std::size_t n = X.rows();
  if (model.kind != ModelKind::mlp_3layer) {
    const std::size_t k = model.layer_shapes[0].first;
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = X.row(i);
      for (std::size_t j = 0; j < k; ++j) g[j] += dm[i] * x[j];
      g[k] += dm[i];
    }
    return;
  }
  const auto [k, h1] = model.layer_shapes[0];
  const auto h2 = model.layer_shapes[1].second;
  const double* W2 = model.params.data() + k * h1 + h1;
  const double* W3 = W2 + h1 * h2 + h2;
  double* gW1 = g.data();
  double* gb1 = gW1 + k * h1;
  double* gW2 = gb1 + h1;
  double* gb2 = gW2 + h1 * h2;
  double* gW3 = gb2 + h2;
  double* gb3 = gW3 + h2;

  std::vector<double> d2(h2), d1(h1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = X.row(i);
    for (std::size_t l = 0; l < h2; ++l) gW3[l] += dm[i] * A2(i, l);
    gb3[0] += dm[i];
    for (std::size_t l = 0; l < h2; ++l) {
      double a = A2(i, l);
      d2[l] = dm[i] * W3[l] * (1.0 - a * a);
    }
    for (std::size_t l = 0; l < h1; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < h2; ++j) acc += d2[j] * W2[l * h2 + j];
      double a = A1(i, l);
      d1[l] = acc * (1.0 - a * a);
    }
    for (std::size_t l = 0; l < h1; ++l)
      for (std::size_t j = 0; j < h2; ++j) gW2[l * h2 + j] += A1(i, l) * d2[j];
    for (std::size_t j = 0; j < h2; ++j) gb2[j] += d2[j];
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t j = 0; j < h1; ++j) gW1[l * h1 + j] += x[l] * d1[j];
    for (std::size_t j = 0; j < h1; ++j) gb1[j] += d1[j];
  }
}

inline void add_decay_gradient(const ScoringModel& model, std::vector<double>& g) {
  if (model.loss != LossKind::hinge) return;
  const std::size_t k = model.layer_shapes[0].first;
  for (std::size_t j = 0; j < k; ++j) g[j] += model.weight_decay * model.params[j];
}

}  // namespace detail

// Objective value on (X, y); if grad != nullptr it is filled with
// d objective / d params (same layout as model.params).  The margin kind's
// objective includes its 0.5 * decay * |w|^2 term, so gradient and value
// always describe the same function.
inline double loss_and_gradient(const ScoringModel& model, const Matrix& X,
                                const std::vector<int>& y,
                                std::vector<double>* grad = nullptr) {
  require(X.rows() == y.size(), errc::dimension_mismatch, "rows vs labels");
  require(X.rows() > 0, errc::empty_input, "empty batch");
  require(X.cols() == model.input_dim(), errc::dimension_mismatch,
          "feature width vs model input");
  std::vector<double> m;
  Matrix A1, A2;
  bool mlp = model.kind == ModelKind::mlp_3layer;
  detail::forward_margins(model, X, m, mlp ? &A1 : nullptr, mlp ? &A2 : nullptr);
  std::vector<double> dm;
  double loss = detail::data_loss_dm(model, m, y, dm);
  if (grad) {
    grad->assign(model.params.size(), 0.0);
    detail::backprop_margins(model, X, dm, A1, A2, *grad);
    detail::add_decay_gradient(model, *grad);
  }
  return loss;
}

inline ScoringModel init_model(ModelKind kind, LossKind loss, std::size_t k,
                               std::uint64_t seed,
                               std::vector<std::size_t> hidden = {32, 16}) {
  require(!(loss == LossKind::hinge) || kind == ModelKind::margin,
          errc::argument, "hinge pairs only with the margin kind");
  require(!(kind == ModelKind::margin) || loss == LossKind::hinge,
          errc::argument, "margin kind trains on hinge loss");
  ScoringModel m;
  m.kind = kind;
  m.loss = loss;
  if (kind == ModelKind::mlp_3layer) {
    require(hidden.size() == 2, errc::argument, "mlp_3layer takes two hidden widths");
    m.layer_shapes = {{k, hidden[0]}, {hidden[0], hidden[1]}, {hidden[1], 1}};
  } else {
    m.layer_shapes = {{k, 1}};
  }
  m.params.assign(ScoringModel::param_count(m.layer_shapes), 0.0);
  // Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases start at 0.
  Rng r(seed);
  std::size_t off = 0;
  for (auto [in, out] : m.layer_shapes) {
    double lim = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < in * out; ++i) m.params[off + i] = r.uniform(-lim, lim);
    off += in * out + out;  // skip biases
  }
  return m;
}

inline ScoringModel train_baseline(const ingest::Dataset& train, ModelKind kind,
                                   LossKind loss, const TrainConfig& config,
                                   std::vector<std::size_t> hidden = {32, 16}) {
  train.check_consistent();
  require(train.size() > 0, errc::empty_input, "empty training set");
  require(config.learning_rate > 0.0, errc::argument, "learning_rate must be > 0");
  require(config.epochs > 0, errc::argument, "epochs must be > 0");
  bool has0 = false, has1 = false;
  for (int v : train.labels) (v ? has1 : has0) = true;
  require(has0 && has1, errc::argument, "training data must contain both classes");

  ScoringModel model = init_model(kind, loss, train.dim(), config.seed, hidden);
  model.weight_decay = (kind == ModelKind::margin) ? config.weight_decay : 0.0;
  model.training_loss.reserve(config.epochs);

  const std::size_t n = train.size();
  Rng batch_rng = Rng(config.seed).derive(0x6261746368ull);  // "batch"
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.batch == 0 || config.batch >= n) {
      double L = loss_and_gradient(model, train.features, train.labels, &grad);
      if (!std::isfinite(L))
        fail(errc::training_divergence,
             "non-finite loss at epoch " + std::to_string(epoch));
      model.training_loss.push_back(L);
      for (std::size_t j = 0; j < grad.size(); ++j)
        model.params[j] -= config.learning_rate * grad[j];
    } else {
      double L = loss_and_gradient(model, train.features, train.labels);
      if (!std::isfinite(L))
        fail(errc::training_divergence,
             "non-finite loss at epoch " + std::to_string(epoch));
      model.training_loss.push_back(L);
      batch_rng.shuffle(order);
      for (std::size_t start = 0; start < n; start += config.batch) {
        std::size_t stop = std::min(n, start + config.batch);
        Matrix Xb(stop - start, train.dim());
        std::vector<int> yb(stop - start);
        for (std::size_t i = start; i < stop; ++i) {
          Xb.set_row(i - start, train.features.row_copy(order[i]));
          yb[i - start] = train.labels[order[i]];
        }
        loss_and_gradient(model, Xb, yb, &grad);
        for (std::size_t j = 0; j < grad.size(); ++j)
          model.params[j] -= config.learning_rate * grad[j];
      }
    }
  }
  for (double p : model.params)
    if (!std::isfinite(p))
      fail(errc::training_divergence,
           "non-finite parameter after epoch " + std::to_string(config.epochs - 1));
  return model;
}

inline std::vector<double> score(const ScoringModel& model, const Matrix& X) {
  require(X.cols() == model.input_dim(), errc::dimension_mismatch,
          "feature width " + std::to_string(X.cols()) + " vs model input " +
              std::to_string(model.input_dim()));
  std::vector<double> m;
  detail::forward_margins(model, X, m);
  for (double& v : m) v = clamp_score(sigmoid(v));
  return m;
}

inline std::vector<int> classify(const std::vector<double>& scores, double t) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > t ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// FMMD persistence: magic "FMMD", version byte, kind tag, loss tag, layer
// count + (in, out) shapes, weight-decay, param count + params (f64 LE).

inline void save_fmmd(const ScoringModel& model, const std::string& path) {
  namespace d = ingest::detail;
  std::ofstream os(path, std::ios::binary);
  require(os.good(), errc::io, "cannot write " + path);
  os.write("FMMD", 4);
  os.put(1);
  os.put(static_cast<char>(model.kind));
  os.put(static_cast<char>(model.loss));
  d::put_u64(os, model.layer_shapes.size());
  for (auto [in, out] : model.layer_shapes) {
    d::put_u64(os, in);
    d::put_u64(os, out);
  }
  d::put_f64(os, model.weight_decay);
  d::put_u64(os, model.params.size());
  for (double p : model.params) d::put_f64(os, p);
  require(os.good(), errc::io, "write failed: " + path);
}

inline ScoringModel load_fmmd(const std::string& path) {
  namespace d = ingest::detail;
  std::ifstream is(path, std::ios::binary);
  require(is.good(), errc::io, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "FMMD", 4) == 0, errc::parse,
          path + ": bad FMMD magic");
  require(is.get() == 1, errc::parse, path + ": unsupported FMMD version");
  ScoringModel m;
  m.kind = static_cast<ModelKind>(is.get());
  m.loss = static_cast<LossKind>(is.get());
  std::uint64_t nl = d::get_u64(is);
  for (std::uint64_t i = 0; i < nl; ++i) {
    std::size_t in = d::get_u64(is);
    std::size_t out = d::get_u64(is);
    m.layer_shapes.emplace_back(in, out);
  }
  m.weight_decay = d::get_f64(is);
  std::uint64_t np = d::get_u64(is);
  require(np == ScoringModel::param_count(m.layer_shapes), errc::parse,
          path + ": param count does not match shapes");
  m.params.resize(np);
  for (double& p : m.params) p = d::get_f64(is);
  require(is.good(), errc::parse, path + ": truncated FMMD payload");
  return m;
}

}  // namespace fairmap::scoring
