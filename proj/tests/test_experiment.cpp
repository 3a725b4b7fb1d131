// experiment driver: config JSON, run_experiment stages, report emission,
// pipeline comparison.
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fairmap/fairmap.hpp"

using namespace fairmap;
using namespace fairmap::experiment;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& leaf) {
  auto dir = fs::temp_directory_path() / "fairmap_exp" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string write_file(const std::string& dir, const std::string& name,
                       const std::string& body) {
  auto path = (fs::path(dir) / name).string();
  std::ofstream os(path);
  os << body;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// small, fast synthetic preprocess config
ExperimentConfig quick_config(const std::string& out, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.dataset.synth.n_per_group = 400;
  cfg.dataset.synth.dim = 5;
  cfg.train = {0.1, 150, 0, 0, 1e-4};
  cfg.neighbor_count = 5;
  cfg.output_dir = out;
  cfg.seed = seed;
  return cfg;
}

// two-group csv schema: numeric x, categorical job, sensitive sex, label y
ingest::FeatureSchema csv_schema() {
  ingest::FeatureSchema s;
  s.columns = {{"x", ingest::ColumnKind::numeric},
               {"job", ingest::ColumnKind::categorical}};
  s.sensitive_column = "sex";
  s.label_column = "y";
  return s;
}

std::string train_csv_body() {
  std::ostringstream os;
  os << "x,job,sex,y\n";
  // 10 rows per group; label = x > 5; both job levels in both groups
  for (int i = 1; i <= 10; ++i)
    os << i << "," << (i % 2 ? "u" : "v") << ",a," << (i > 5 ? 1 : 0) << "\n";
  for (int i = 1; i <= 10; ++i)
    os << i + 0.5 << "," << (i % 2 ? "u" : "v") << ",b," << (i > 5 ? 1 : 0)
       << "\n";
  return os.str();
}

}  // namespace

TEST_CASE("select_lambda picks the exact match and breaks ties downward") {
  using experiment::detail::select_lambda;
  // exact hit
  CHECK(select_lambda({{0.0, 0.30}, {0.5, 0.20}, {1.0, 0.10}}, 0.20) == 1);
  // nearest wins
  CHECK(select_lambda({{0.0, 0.30}, {0.5, 0.18}, {1.0, 0.02}}, 0.20) == 1);
  // equidistant values -- dyadic so the tie is exact in doubles: lower
  // lambda wins regardless of candidate order
  CHECK(select_lambda({{0.5, 0.25}, {2.0, 0.75}}, 0.5) == 0);
  CHECK(select_lambda({{2.0, 0.75}, {0.5, 0.25}}, 0.5) == 1);
  CHECK_THROWS_AS(select_lambda({}, 0.1), error);
}

TEST_CASE("experiment config survives a JSON round trip") {
  SECTION("synthetic + regularized") {
    ExperimentConfig cfg;
    cfg.dataset.synth.family = synthetic::Family::gaussian;
    cfg.dataset.synth.n_per_group = 123;
    cfg.dataset.synth.score_shift = 0.07;
    cfg.dataset.train_fraction = 0.6;
    cfg.model = scoring::ModelKind::mlp_3layer;
    cfg.train = {0.02, 77, 0, 32, 1e-3};
    cfg.pipeline = Pipeline::regularized;
    cfg.regularizer.kind = regularizers::RegKind::kl_gaussian;
    cfg.regularizer.lambda = 2.5;
    cfg.finetune.learning_rate = 0.005;
    cfg.finetune.epochs = 40;
    cfg.tidp_grid = 501;
    cfg.wgf_grid = 26;
    cfg.output_dir = "elsewhere";
    cfg.seed = 99;
    auto j = to_json(cfg);
    auto j2 = to_json(config_from_json(j));
    CHECK(j.dump(2) == j2.dump(2));
  }
  SECTION("csv + schema") {
    ExperimentConfig cfg;
    cfg.dataset.kind = "csv";
    cfg.dataset.path = "somewhere.csv";
    cfg.dataset.pre_split = true;
    cfg.dataset.test_path = "somewhere_test.csv";
    cfg.dataset.schema = csv_schema();
    cfg.model = scoring::ModelKind::margin;
    cfg.loss = scoring::LossKind::hinge;
    auto j = to_json(cfg);
    auto j2 = to_json(config_from_json(j));
    CHECK(j.dump(2) == j2.dump(2));
  }
  SECTION("empty object yields pure defaults") {
    auto cfg = config_from_json(ordered_json::object());
    CHECK(cfg.dataset.kind == "synthetic");
    CHECK(cfg.pipeline == Pipeline::preprocess);
    CHECK(cfg.train.epochs == 500);
    CHECK(cfg.tidp_grid == 1001);
    CHECK(cfg.wgf_grid == 51);
    CHECK(cfg.neighbor_count == 10);
    CHECK(cfg.histogram_bins == 100);
  }
  SECTION("unknown names are rejected") {
    CHECK_THROWS_AS(config_from_json({{"pipeline", "zigzag"}}), error);
    CHECK_THROWS_AS(config_from_json({{"model", {{"kind", "forest"}}}}), error);
    CHECK_THROWS_AS(config_from_json({{"dataset", {{"kind", "hdf5"}}}}), error);
    CHECK_THROWS_AS(
        config_from_json({{"regularizer", {{"kind", "wasserstein2"}}}}), error);
  }
}

TEST_CASE("validate rejects malformed configs") {
  ExperimentConfig cfg;
  cfg.dataset.train_fraction = 1.0;
  CHECK_THROWS_AS(validate(cfg), error);
  cfg.dataset.train_fraction = 0.7;
  cfg.neighbor_count = 0;
  CHECK_THROWS_AS(validate(cfg), error);
  cfg.neighbor_count = 10;
  cfg.dataset.kind = "csv";
  CHECK_THROWS_AS(validate(cfg), error);  // no path
  cfg.dataset.path = "/nonexistent/definitely_missing.csv";
  CHECK_THROWS_AS(validate(cfg), error);  // missing file
}

TEST_CASE("coincident group distributions stay near the baseline") {
  auto out = scratch_dir("coincident");
  ExperimentConfig cfg;
  cfg.dataset.synth.n_per_group = 2000;
  cfg.dataset.synth.dim = 10;
  cfg.dataset.synth.score_shift = 0.0;  // identical distributions
  cfg.dataset.synth.noise_sd = 0.4;
  cfg.model = scoring::ModelKind::margin;
  cfg.loss = scoring::LossKind::hinge;
  cfg.train = {0.05, 500, 0, 0, 10.0};
  cfg.output_dir = out;
  cfg.seed = 3;
  auto rep = run_experiment(cfg);
  INFO("base " << rep.baseline_fairness.delta_tidp << " pre "
               << rep.fairness.delta_tidp);
  CHECK(rep.baseline_fairness.delta_tidp <= 0.05);
  CHECK(std::abs(rep.fairness.delta_tidp - rep.baseline_fairness.delta_tidp) <=
        0.03);
}

TEST_CASE("preprocessing repairs a biased score model") {
  auto out = scratch_dir("biased");
  ExperimentConfig cfg;
  cfg.dataset.synth.n_per_group = 2000;
  cfg.dataset.synth.dim = 10;
  cfg.dataset.synth.score_shift = 0.2;
  cfg.dataset.synth.noise_sd = 0.4;
  cfg.model = scoring::ModelKind::margin;
  cfg.loss = scoring::LossKind::hinge;
  cfg.train = {0.05, 500, 0, 0, 10.0};
  cfg.output_dir = out;
  cfg.seed = 0;
  auto rep = run_experiment(cfg);
  INFO("base " << rep.baseline_fairness.delta_tidp << " pre "
               << rep.fairness.delta_tidp << " wgf " << rep.fairness.delta_wgf_avg);
  CHECK(rep.fairness.delta_tidp < rep.baseline_fairness.delta_tidp);
  CHECK(rep.fairness.delta_tidp <= 0.3 * rep.baseline_fairness.delta_tidp);
  CHECK(rep.fairness.delta_wgf_avg <= 0.05);
  for (auto [g, tau] : rep.rank_preservation) {
    INFO("group " << g);
    CHECK(tau >= 0.95);
  }
  // artifacts: model + caches + mappings + report files all on disk
  for (const auto* name :
       {"model.fmmd", "train.fmds", "test.fmds", "mapping_g1.fmkd",
        "mapping_g2.fmkd", "report.json", "timings.json", "tidp_curve.csv",
        "wgf_curve.csv", "performance.csv"}) {
    INFO(name);
    CHECK(fs::exists(fs::path(out) / name));
  }

  SECTION("report.json round-trips the value side exactly") {
    auto loaded = load_run_report((fs::path(out) / "report.json").string());
    CHECK(loaded.pipeline == Pipeline::preprocess);
    CHECK(loaded.n_train == rep.n_train);
    CHECK(loaded.n_test == rep.n_test);
    CHECK(loaded.rejected_rows == rep.rejected_rows);
    CHECK(loaded.fairness.delta_tidp == rep.fairness.delta_tidp);
    CHECK(loaded.fairness.delta_wgf_avg == rep.fairness.delta_wgf_avg);
    CHECK(loaded.fairness.auc == rep.fairness.auc);
    CHECK(loaded.baseline_fairness.delta_tidp ==
          rep.baseline_fairness.delta_tidp);
    CHECK(loaded.fairness.cv_curve == rep.fairness.cv_curve);
    CHECK(loaded.fairness.wgf_curve == rep.fairness.wgf_curve);
    CHECK(loaded.scores_q == rep.scores_q);
    CHECK(loaded.scores_r == rep.scores_r);
    CHECK(loaded.rank_preservation == rep.rank_preservation);
  }
}

TEST_CASE("identical runs produce byte-identical deterministic outputs") {
  auto out1 = scratch_dir("det1");
  auto out2 = scratch_dir("det2");
  auto cfg1 = quick_config(out1, 17);
  auto cfg2 = quick_config(out2, 17);
  auto rep1 = run_experiment(cfg1);
  auto rep2 = run_experiment(cfg2);
  CHECK(rep1.fairness.delta_tidp == rep2.fairness.delta_tidp);
  // timings.json is the wall-clock sidecar and is exempt; report.json embeds
  // the config, whose output_dir differs, so compare it with the dirs patched
  std::string r1 = slurp((fs::path(out1) / "report.json").string());
  std::string r2 = slurp((fs::path(out2) / "report.json").string());
  auto patch = [](std::string s, const std::string& from) {
    auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, from.size(), "OUT");
    return s;
  };
  CHECK(patch(r1, out1) == patch(r2, out2));
  for (const auto* name : {"tidp_curve.csv", "wgf_curve.csv", "performance.csv",
                           "scores_preprocess_1.csv", "scores_preprocess_2.csv",
                           "scores_baseline_1.csv", "scores_baseline_2.csv"}) {
    INFO(name);
    CHECK(slurp((fs::path(out1) / name).string()) ==
          slurp((fs::path(out2) / name).string()));
  }
}

TEST_CASE("baseline pipeline scores are the identity adjustment") {
  auto out = scratch_dir("baseline");
  auto cfg = quick_config(out, 5);
  cfg.pipeline = Pipeline::baseline;
  auto rep = run_experiment(cfg);
  CHECK(rep.scores_q == rep.scores_r);
  for (auto [g, tau] : rep.rank_preservation) {
    (void)g;
    CHECK(tau == 1.0);
  }
  // the Q files take the pipeline name, which for baseline is "baseline"
  CHECK(fs::exists(fs::path(out) / "scores_baseline_1.csv"));
  CHECK(fs::exists(fs::path(out) / "scores_baseline_2.csv"));
}

TEST_CASE("regularized pipeline writes the tuned model") {
  auto out = scratch_dir("reg");
  auto cfg = quick_config(out, 7);
  cfg.pipeline = Pipeline::regularized;
  cfg.regularizer.kind = regularizers::RegKind::kl_gaussian;
  cfg.regularizer.lambda = 0.5;
  cfg.finetune = {0.02, 60, 0, 0, 1e-4};
  auto rep = run_experiment(cfg);
  CHECK(fs::exists(fs::path(out) / "model_tuned.fmmd"));
  CHECK(!fs::exists(fs::path(out) / "mapping_g1.fmkd"));
  auto tuned = scoring::load_fmmd((fs::path(out) / "model_tuned.fmmd").string());
  auto base = scoring::load_fmmd((fs::path(out) / "model.fmmd").string());
  CHECK(tuned.params != base.params);
  CHECK(rep.n_test > 0);
}

TEST_CASE("fmds dataset kind feeds the pipeline") {
  auto out = scratch_dir("fmds");
  synthetic::SyntheticConfig sc;
  sc.n_per_group = 150;
  sc.dim = 4;
  sc.seed = 21;
  auto full = synthetic::generate(sc);
  auto cache = (fs::path(out) / "cache.fmds").string();
  ingest::save_fmds(full, cache);
  ExperimentConfig cfg;
  cfg.dataset.kind = "fmds";
  cfg.dataset.path = cache;
  cfg.train = {0.1, 100, 0, 0, 1e-4};
  cfg.neighbor_count = 5;
  cfg.output_dir = (fs::path(out) / "run").string();
  auto rep = run_experiment(cfg);
  CHECK(rep.n_train + rep.n_test == full.size());
  CHECK(rep.n_train == 210);  // floor(0.7 * 300)
}

TEST_CASE("pre-split csv data counts unseen categories and rejects unmapped groups") {
  auto out = scratch_dir("presplit");
  auto train_path = write_file(out, "train.csv", train_csv_body());
  // test: 4 a-rows, 4 b-rows, plus two rows of group c (absent at training)
  // and two unseen 'w' cells in the job column
  auto test_path = write_file(out, "test.csv",
                              "x,job,sex,y\n"
                              "2,u,a,0\n4,v,a,0\n6,u,a,1\n8,w,a,1\n"
                              "3,u,b,0\n5,v,b,0\n7,w,b,1\n9,u,b,1\n"
                              "4,u,c,0\n6,v,c,1\n");
  ExperimentConfig cfg;
  cfg.dataset.kind = "csv";
  cfg.dataset.path = train_path;
  cfg.dataset.pre_split = true;
  cfg.dataset.test_path = test_path;
  cfg.dataset.schema = csv_schema();
  cfg.train = {0.3, 200, 0, 0, 1e-4};
  cfg.neighbor_count = 3;
  cfg.output_dir = (fs::path(out) / "run").string();
  auto rep = run_experiment(cfg);
  CHECK(rep.rejected_rows == 2);
  CHECK(rep.n_test == 8);
  CHECK(rep.unseen_categories == 2);
  CHECK(rep.n_train == 20);
}

TEST_CASE("stage failures carry the stage tag and clean up outputs") {
  auto out = scratch_dir("abort");
  auto train_path = write_file(out, "train.csv", train_csv_body());
  // only group a in the test file: metrics needs two groups and must abort
  auto test_path = write_file(out, "test.csv",
                              "x,job,sex,y\n"
                              "2,u,a,0\n4,v,a,0\n6,u,a,1\n8,v,a,1\n");
  ExperimentConfig cfg;
  cfg.dataset.kind = "csv";
  cfg.dataset.path = train_path;
  cfg.dataset.pre_split = true;
  cfg.dataset.test_path = test_path;
  cfg.dataset.schema = csv_schema();
  cfg.train = {0.3, 200, 0, 0, 1e-4};
  cfg.neighbor_count = 3;
  auto run_dir = (fs::path(out) / "run").string();
  cfg.output_dir = run_dir;
  try {
    run_experiment(cfg);
    FAIL("no stage failure");
  } catch (const error& e) {
    CHECK(e.code() == errc::stage_failure);
    CHECK(std::string(e.what()).find("stage metrics") != std::string::npos);
  }
  // every artifact written before the failure was removed again
  for (const auto* name : {"model.fmmd", "train.fmds", "test.fmds",
                           "mapping_g1.fmkd", "mapping_g2.fmkd", "report.json"}) {
    INFO(name);
    CHECK(!fs::exists(fs::path(run_dir) / name));
  }
}

TEST_CASE("emit_report accepts a degenerate empty report") {
  auto out = scratch_dir("empty");
  RunReport rep;
  rep.config_echo = ordered_json::object();
  rep.pipeline = Pipeline::baseline;
  auto written = emit_report(rep, out);
  CHECK(!written.empty());
  auto j = ordered_json::parse(slurp((fs::path(out) / "report.json").string()));
  CHECK(j.at("fairness").at("cv_curve").is_array());
  CHECK(j.at("fairness").at("cv_curve").empty());
  CHECK(j.at("fairness").at("wgf_curve").empty());
  CHECK(j.at("n_train").get<std::size_t>() == 0);
  // curve CSVs degrade to a bare header
  CHECK(slurp((fs::path(out) / "tidp_curve.csv").string()) ==
        "threshold,cv_baseline,cv_baseline\n");
  CHECK(slurp((fs::path(out) / "wgf_curve.csv").string()) ==
        "epsilon,delta_wgf_baseline\n");
}

TEST_CASE("compare_pipelines selects per-combo columns against the target") {
  // tiny but real end-to-end comparison: one preprocess config plus a
  // two-lambda KL sweep on the same synthetic source
  auto out = scratch_dir("compare");
  std::vector<ExperimentConfig> configs;
  auto pre = quick_config((fs::path(out) / "pre").string(), 31);
  configs.push_back(pre);
  int k = 0;
  for (double lam : {0.0, 1.0}) {
    auto reg = quick_config((fs::path(out) / ("reg" + std::to_string(k++))).string(), 31);
    reg.pipeline = Pipeline::regularized;
    reg.regularizer.kind = regularizers::RegKind::kl_gaussian;
    reg.regularizer.lambda = lam;
    reg.finetune = {0.02, 40, 0, 0, 1e-4};
    configs.push_back(reg);
  }
  auto table = compare_pipelines(configs, Matching::match_wgf);
  REQUIRE(table.columns.size() == 3);  // preprocess, baseline, one KL pick
  CHECK(table.columns[0].label == "preprocess");
  CHECK(table.columns[1].label == "baseline");
  CHECK(table.columns[2].reg_kind == "kl_gaussian");
  CHECK((table.columns[2].lambda == 0.0 || table.columns[2].lambda == 1.0));
  CHECK(table.preprocess_delta_wgf == table.columns[0].delta_wgf_avg);
  // match_wgf comparisons carry CV curves on the threshold grid
  REQUIRE(table.columns[0].curve.size() == 1001);
  CHECK(table.columns[0].curve.front().first == 0.0);
  CHECK(table.columns[0].curve.back().first == 1.0);

  emit_comparison(table, out);
  auto j = ordered_json::parse(slurp((fs::path(out) / "comparison.json").string()));
  CHECK(j.at("matching") == "match_wgf");
  REQUIRE(j.at("columns").size() == 3);
  CHECK(j.at("columns")[2].contains("lambda"));
  auto csv = slurp((fs::path(out) / "comparison_curves.csv").string());
  CHECK(csv.rfind("threshold,preprocess,baseline,kl_gaussian_lambda", 0) == 0);

  SECTION("misshapen comparison sets are rejected") {
    CHECK_THROWS_AS(compare_pipelines({configs[1]}, Matching::match_wgf), error);
    CHECK_THROWS_AS(compare_pipelines({configs[0]}, Matching::match_wgf), error);
    std::vector<ExperimentConfig> two_pre = {configs[0], configs[0]};
    CHECK_THROWS_AS(compare_pipelines(two_pre, Matching::match_wgf), error);
  }
}
