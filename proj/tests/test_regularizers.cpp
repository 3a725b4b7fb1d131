// regularized fine-tuning: soft histograms, EMD / symmetric-Gaussian-KL
// penalties, combined objective, lambda sweep plumbing.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "fairmap/core.hpp"
#include "fairmap/dataset.hpp"
#include "fairmap/metrics.hpp"
#include "fairmap/regularizers.hpp"
#include "fairmap/scoring.hpp"
#include "fairmap/synthetic.hpp"

using namespace fairmap;
using namespace fairmap::regularizers;
using Catch::Approx;

namespace {

std::vector<double> random_unit_scores(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = 0.05 + 0.9 * r.uniform();
  return v;
}

// central finite differences on a scalar functional of one score vector side
double max_fd_error(const std::vector<double>& grad,
                    const std::function<double(const std::vector<double>&)>& f,
                    std::vector<double> x, double h = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double up = f(x);
    x[i] = keep - h;
    double down = f(x);
    x[i] = keep;
    double fd = (up - down) / (2.0 * h);
    double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - grad[i]) / denom);
  }
  return worst;
}

ingest::Dataset two_group_dataset(std::size_t n_per_group, std::size_t dim,
                                  std::uint64_t seed) {
  synthetic::SyntheticConfig sc;
  sc.n_per_group = n_per_group;
  sc.dim = dim;
  sc.seed = seed;
  return ingest::encode_features(synthetic::generate(sc));
}

}  // namespace

TEST_CASE("soft_histogram concentrates a single score at its bin center") {
  // bin 3 of C=10 has center 0.35; a narrow kernel leaves everything there
  auto p = soft_histogram({0.35}, 10, 0.001);
  REQUIRE(p.size() == 10);
  CHECK(p[3] > 0.999);
  double sum = 0.0;
  for (double v : p) sum += v;
  CHECK(sum == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("soft_histogram of uniform scores is near-flat") {
  auto s = random_unit_scores(10000, 21);
  for (auto& v : s) v = (v - 0.05) / 0.9;  // back to [0,1)
  auto p = soft_histogram(s, 10, 0.05);
  double sum = 0.0;
  for (double v : p) {
    CHECK(v == Approx(0.1).margin(0.02));
    sum += v;
  }
  CHECK(sum == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("soft_histogram argument validation") {
  CHECK_THROWS_AS(soft_histogram({0.5}, 1, 0.1), error);
  CHECK_THROWS_AS(soft_histogram({0.5}, 10, 0.0), error);
  CHECK_THROWS_AS(soft_histogram({}, 10, 0.1), error);
}

TEST_CASE("soft_histogram_jacobian matches finite differences") {
  auto s = random_unit_scores(6, 33);
  const std::size_t C = 8;
  // Small steps lose here: far-tail bins carry probabilities ~1e-10 and the
  // central difference is dominated by cancellation noise scaled by 1/(2h).
  const double bw = 0.08, h = 1e-4;
  Matrix J = soft_histogram_jacobian(s, C, bw);
  REQUIRE(J.rows() == 6);
  REQUIRE(J.cols() == C);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      auto up = s, down = s;
      up[i] += h;
      down[i] -= h;
      double fd = (soft_histogram(up, C, bw)[c] - soft_histogram(down, C, bw)[c]) /
                  (2.0 * h);
      double denom = std::max({std::abs(fd), std::abs(J(i, c)), 1e-8});
      CHECK(std::abs(fd - J(i, c)) / denom < 1e-4);
    }
  }
}

TEST_CASE("EMD regularizer hand values") {
  RegularizerConfig rc;
  rc.bin_count = 2;
  rc.bandwidth = 0.01;
  SECTION("identical groups") {
    auto s = random_unit_scores(50, 5);
    rc.bin_count = 50;
    rc.bandwidth = 0.01;
    CHECK(emd_regularizer(s, s, rc) == 0.0);
  }
  SECTION("point masses at 0 and 1 with two bins") {
    // CDFs (1,1) vs (0,1): total variation over bins = 1
    std::vector<double> zeros = {0.0, 0.0, 0.0};
    std::vector<double> ones = {1.0, 1.0, 1.0};
    CHECK(emd_regularizer(zeros, ones, rc) == Approx(1.0).margin(1e-12));
  }
  SECTION("symmetry") {
    auto a = random_unit_scores(40, 6);
    auto b = random_unit_scores(30, 7);
    rc.bin_count = 20;
    rc.bandwidth = 0.05;
    CHECK(emd_regularizer(a, b, rc) == Approx(emd_regularizer(b, a, rc)));
  }
  SECTION("empty side rejected") {
    CHECK_THROWS_AS(emd_regularizer({}, {0.5}, rc), error);
  }
}

TEST_CASE("EMD score gradients match finite differences") {
  auto si = random_unit_scores(12, 61);
  auto sj = random_unit_scores(9, 62);
  const std::size_t C = 16;
  const double bw = 0.06;
  auto vg = detail::emd_value_grad(si, sj, C, bw, true);
  REQUIRE(vg.grad_i.size() == si.size());
  REQUIRE(vg.grad_j.size() == sj.size());
  auto f_i = [&](const std::vector<double>& x) {
    return detail::emd_value_grad(x, sj, C, bw, false).value;
  };
  auto f_j = [&](const std::vector<double>& x) {
    return detail::emd_value_grad(si, x, C, bw, false).value;
  };
  CHECK(max_fd_error(vg.grad_i, f_i, si) < 1e-4);
  CHECK(max_fd_error(vg.grad_j, f_j, sj) < 1e-4);

  SECTION("a small step against the gradient decreases the value") {
    auto si2 = si;
    auto sj2 = sj;
    const double eta = 1e-3;
    for (std::size_t k = 0; k < si2.size(); ++k) si2[k] -= eta * vg.grad_i[k];
    for (std::size_t k = 0; k < sj2.size(); ++k) sj2[k] -= eta * vg.grad_j[k];
    CHECK(detail::emd_value_grad(si2, sj2, C, bw, false).value < vg.value);
  }
}

TEST_CASE("symmetric Gaussian KL hand values") {
  SECTION("matching first two moments") {
    // same mean and variance, shapes irrelevant
    CHECK(kl_gaussian_regularizer({-1.0, 1.0}, {1.0, -1.0}) ==
          Approx(0.0).margin(1e-14));
  }
  SECTION("unit-variance pair one mean apart gives exactly 1") {
    CHECK(kl_gaussian_regularizer({-1.0, 1.0}, {0.0, 2.0}) ==
          Approx(1.0).epsilon(1e-14));
  }
  SECTION("symmetry") {
    auto a = random_unit_scores(25, 71);
    auto b = random_unit_scores(35, 72);
    CHECK(kl_gaussian_regularizer(a, b) ==
          Approx(kl_gaussian_regularizer(b, a)));
  }
  SECTION("degenerate variance") {
    try {
      kl_gaussian_regularizer({0.5, 0.5, 0.5}, {0.2, 0.8});
      FAIL("no throw");
    } catch (const error& e) {
      CHECK(e.code() == errc::degenerate_distribution);
    }
  }
  SECTION("fewer than two points per side") {
    CHECK_THROWS_AS(kl_gaussian_regularizer({0.5}, {0.2, 0.8}), error);
  }
}

TEST_CASE("KL score gradients match finite differences") {
  auto si = random_unit_scores(10, 81);
  auto sj = random_unit_scores(14, 82);
  auto vg = detail::kl_value_grad(si, sj, true);
  auto f_i = [&](const std::vector<double>& x) {
    return detail::kl_value_grad(x, sj, false).value;
  };
  auto f_j = [&](const std::vector<double>& x) {
    return detail::kl_value_grad(si, x, false).value;
  };
  CHECK(max_fd_error(vg.grad_i, f_i, si) < 1e-4);
  CHECK(max_fd_error(vg.grad_j, f_j, sj) < 1e-4);
}

TEST_CASE("finetune with lambda 0 is plain continued gradient descent") {
  auto ds = two_group_dataset(300, 6, 5);
  scoring::TrainConfig tc{0.05, 100, 11, 0, 1e-4};
  auto base = scoring::train_baseline(ds, scoring::ModelKind::mlp_3layer,
                                      scoring::LossKind::cross_entropy, tc);
  auto manual = base;
  std::vector<double> g;
  for (int e = 0; e < 40; ++e) {
    scoring::loss_and_gradient(manual, ds.features, ds.labels, &g);
    for (std::size_t j = 0; j < g.size(); ++j) manual.params[j] -= 0.02 * g[j];
  }
  RegularizerConfig rc;
  rc.lambda = 0.0;
  FinetuneTrace trace;
  auto tuned = finetune(base, ds, rc, {0.02, 40, 0, 0, 1e-4}, &trace);
  CHECK(tuned.params == manual.params);  // bitwise
  REQUIRE(trace.loss.size() == 40);
  REQUIRE(trace.reg.size() == 40);
  for (double r : trace.reg) CHECK(r == 0.0);
  // trace records the data loss at each epoch start
  double l0 = scoring::loss_and_gradient(base, ds.features, ds.labels, nullptr);
  CHECK(trace.loss.front() == l0);
}

TEST_CASE("combined objective gradient matches finite differences") {
  auto ds = two_group_dataset(60, 4, 17);
  scoring::TrainConfig tc{0.1, 60, 3, 0, 1e-4};
  auto base = scoring::train_baseline(
      ds, scoring::ModelKind::logistic_regression,
      scoring::LossKind::cross_entropy, tc);

  auto check_model = [&](const scoring::ScoringModel& model) {
    for (RegKind kind : {RegKind::emd, RegKind::kl_gaussian}) {
      RegularizerConfig rc;
      rc.kind = kind;
      rc.lambda = 2.0;
      std::vector<double> grad;
      objective_and_gradient(model, ds, rc, &grad);
      REQUIRE(grad.size() == model.params.size());
      auto probe = model;
      const double h = 1e-5;
      double worst = 0.0;
      for (std::size_t j = 0; j < probe.params.size(); ++j) {
        double keep = probe.params[j];
        probe.params[j] = keep + h;
        double up = objective_and_gradient(probe, ds, rc, nullptr);
        probe.params[j] = keep - h;
        double down = objective_and_gradient(probe, ds, rc, nullptr);
        probe.params[j] = keep;
        double fd = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(grad[j]), 1e-8});
        worst = std::max(worst, std::abs(fd - grad[j]) / denom);
      }
      CHECK(worst < 1e-4);
    }
  };
  check_model(base);

  SECTION("margin model with active weight decay") {
    scoring::TrainConfig mc{0.05, 40, 4, 0, 0.3};
    auto margin = scoring::train_baseline(ds, scoring::ModelKind::margin,
                                          scoring::LossKind::hinge, mc);
    check_model(margin);
  }
}

TEST_CASE("finetune reports divergence with the epoch") {
  auto ds = two_group_dataset(50, 3, 23);
  scoring::TrainConfig tc{0.05, 30, 1, 0, 10.0};
  auto base = scoring::train_baseline(ds, scoring::ModelKind::margin,
                                      scoring::LossKind::hinge, tc);
  RegularizerConfig rc;
  rc.kind = RegKind::emd;
  rc.lambda = 0.5;
  try {
    finetune(base, ds, rc, {1e12, 80, 0, 0, 10.0});
    FAIL("no divergence");
  } catch (const error& e) {
    CHECK(e.code() == errc::training_divergence);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("finetune argument validation") {
  auto ds = two_group_dataset(20, 3, 29);
  scoring::TrainConfig tc{0.1, 10, 1, 0, 1e-4};
  auto base = scoring::train_baseline(ds, scoring::ModelKind::logistic_regression,
                                      scoring::LossKind::cross_entropy, tc);
  RegularizerConfig rc;
  rc.lambda = -1.0;
  CHECK_THROWS_AS(finetune(base, ds, rc, tc), error);
  rc.lambda = 0.0;
  auto one_group = ds;
  for (auto& g : one_group.groups) g = 1;
  CHECK_THROWS_AS(finetune(base, one_group, rc, tc), error);
}

TEST_CASE("huge lambda drives parity for both regularizers") {
  // direction-only contract: with lambda 1e4 the tuned model must be strictly
  // more parity-fair than its baseline on held-out data
  synthetic::SyntheticConfig sc;
  sc.family = synthetic::Family::gaussian;
  sc.n_per_group = 1500;
  sc.dim = 8;
  sc.score_shift = 0.1;
  sc.score_sd = 0.15;
  sc.noise_sd = 0.4;
  sc.seed = derive_seed(900, 1);
  auto full = synthetic::generate(sc);
  auto split = ingest::split_dataset(full, 0.7, derive_seed(900, 2));
  auto enc = ingest::Encoder::fit(split.train);
  auto train = enc.transform(split.train);
  auto test = enc.transform(split.test);
  scoring::TrainConfig tc{0.1, 300, derive_seed(900, 3), 0, 1e-4};
  auto base = scoring::train_baseline(train, scoring::ModelKind::logistic_regression,
                                      scoring::LossKind::cross_entropy, tc);
  auto R = scoring::score(base, test.features);
  std::vector<double> r1, r2;
  for (std::size_t i = 0; i < R.size(); ++i)
    (test.groups[i] == 1 ? r1 : r2).push_back(R[i]);
  double base_tidp = metrics::delta_tidp(r1, r2).second;
  REQUIRE(base_tidp > 0.05);  // the baseline is meaningfully unfair here

  for (RegKind kind : {RegKind::kl_gaussian, RegKind::emd}) {
    RegularizerConfig rc;
    rc.kind = kind;
    rc.lambda = 1e4;
    auto tuned = finetune(base, train, rc, {1e-4, 400, 0, 0, 1e-4});
    auto Q = scoring::score(tuned, test.features);
    std::vector<double> q1, q2;
    for (std::size_t i = 0; i < Q.size(); ++i)
      (test.groups[i] == 1 ? q1 : q2).push_back(Q[i]);
    INFO(reg_kind_name(kind));
    CHECK(metrics::delta_tidp(q1, q2).second < base_tidp);
  }
}

TEST_CASE("lambda_sweep at lambda 0 reproduces a manual continuation") {
  auto full = two_group_dataset(200, 5, 41);
  auto split = ingest::split_dataset(full, 0.7, 42);
  auto& train = split.train;
  auto& test = split.test;
  scoring::TrainConfig tc{0.1, 80, 7, 0, 1e-4};
  auto base = scoring::train_baseline(train, scoring::ModelKind::logistic_regression,
                                      scoring::LossKind::cross_entropy, tc);
  scoring::TrainConfig ft{0.02, 30, 99, 0, 1e-4};
  auto table = lambda_sweep(base, train, test, RegKind::emd, {0.0}, 1, ft);
  REQUIRE(table.rows.size() == 1);
  const auto& row = table.rows[0];
  CHECK(row.kind == RegKind::emd);
  CHECK(row.lambda == 0.0);
  CHECK(row.trial == 0);

  RegularizerConfig rc;
  rc.lambda = 0.0;
  scoring::TrainConfig cell = ft;
  cell.seed = derive_seed(ft.seed, 0);
  auto tuned = finetune(base, train, rc, cell);
  auto Q = scoring::score(tuned, test.features);
  auto R = scoring::score(base, test.features);
  auto ids = test.group_ids();
  REQUIRE(ids.size() == 2);
  std::vector<double> q1, q2;
  for (std::size_t i = 0; i < Q.size(); ++i)
    (test.groups[i] == ids[0] ? q1 : q2).push_back(Q[i]);
  CHECK(row.delta_tidp == metrics::delta_tidp(q1, q2).second);
  CHECK(row.delta_wgf_avg == metrics::wgf_curve(Q, R, test.groups).second);
  auto perf = metrics::performance(Q, test.labels);
  CHECK(row.accuracy == perf.accuracy_at_half);
  CHECK(row.auc == perf.auc);
}

TEST_CASE("provider-based sweep is deterministic across runs") {
  auto provider = [](int trial) {
    auto full = two_group_dataset(120, 4, derive_seed(500, trial));
    auto split = ingest::split_dataset(full, 0.7, derive_seed(501, trial));
    scoring::TrainConfig tc{0.1, 60, derive_seed(502, trial), 0, 1e-4};
    SweepTrial st;
    st.base = scoring::train_baseline(split.train,
                                      scoring::ModelKind::logistic_regression,
                                      scoring::LossKind::cross_entropy, tc);
    st.train = std::move(split.train);
    st.test = std::move(split.test);
    return st;
  };
  scoring::TrainConfig ft{0.02, 25, 0, 0, 1e-4};
  std::vector<double> lambdas = {0.0, 1.0};
  auto t1 = lambda_sweep(provider, RegKind::kl_gaussian, lambdas, 2, ft);
  auto t2 = lambda_sweep(provider, RegKind::kl_gaussian, lambdas, 2, ft);
  REQUIRE(t1.rows.size() == 4);  // trials major, lambda minor
  REQUIRE(t2.rows.size() == 4);
  for (std::size_t i = 0; i < t1.rows.size(); ++i) {
    CHECK(t1.rows[i].lambda == t2.rows[i].lambda);
    CHECK(t1.rows[i].trial == t2.rows[i].trial);
    CHECK(t1.rows[i].delta_tidp == t2.rows[i].delta_tidp);
    CHECK(t1.rows[i].delta_wgf_avg == t2.rows[i].delta_wgf_avg);
    CHECK(t1.rows[i].accuracy == t2.rows[i].accuracy);
    CHECK(t1.rows[i].auc == t2.rows[i].auc);
  }
  // row order contract for the provider overload: trial-major
  CHECK(t1.rows[0].trial == 0);
  CHECK(t1.rows[1].trial == 0);
  CHECK(t1.rows[2].trial == 1);

  auto summaries = t1.summarize();
  REQUIRE(summaries.size() == 2);
  CHECK(summaries[0].lambda == 0.0);
  CHECK(summaries[1].lambda == 1.0);
  CHECK(summaries[0].tidp_std >= 0.0);
}

TEST_CASE("sweep CSV round-trips exact decimal values") {
  SweepTable table;
  table.rows.push_back({RegKind::emd, 0.5, 0, 0.25, 0.125, 1.0, 0.75});
  table.rows.push_back({RegKind::kl_gaussian, 2.0, 3, 0.0625, 0.5, 0.875, 1.0});
  std::ostringstream os;
  table.write_csv(os);
  CHECK(os.str() ==
        "kind,lambda,trial,delta_tidp,delta_wgf_avg,accuracy,auc\n"
        "emd,0.5,0,0.25,0.125,1,0.75\n"
        "kl_gaussian,2,3,0.0625,0.5,0.875,1\n");

  const std::string path = "/tmp/fairmap_sweep_test.csv";
  table.to_csv(path);
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == os.str());
  std::remove(path.c_str());
}
