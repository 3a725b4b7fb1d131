// experiment: end-to-end pipeline orchestration.  An ExperimentConfig
// (JSON-loadable) fully determines a run: dataset acquisition, encoding,
// baseline training, the preprocess transform or regularized fine-tune,
// metrics, and report emission.  Every randomized stage derives its seed from
// the master seed, so (config, seed) determines every byte of report.json and
// the CSVs; wall-clock timings go to a separate timings.json sidecar to keep
// that surface clean.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fairmap/core.hpp"
#include "fairmap/correspondence.hpp"
#include "fairmap/dataset.hpp"
#include "fairmap/histogram.hpp"
#include "fairmap/mapping.hpp"
#include "fairmap/metrics.hpp"
#include "fairmap/regularizers.hpp"
#include "fairmap/scoring.hpp"
#include "fairmap/synthetic.hpp"

namespace fairmap::experiment {

using ordered_json = nlohmann::ordered_json;

enum class Pipeline { baseline, preprocess, regularized };

inline const char* pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::baseline: return "baseline";
    case Pipeline::preprocess: return "preprocess";
    case Pipeline::regularized: return "regularized";
  }
  return "?";
}

inline Pipeline pipeline_from_name(const std::string& s) {
  if (s == "baseline") return Pipeline::baseline;
  if (s == "preprocess") return Pipeline::preprocess;
  if (s == "regularized") return Pipeline::regularized;
  fail(errc::argument, "unknown pipeline '" + s + "'");
}

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | csv | fmds
  std::string path;                // csv/fmds source
  std::string test_path;           // csv with pre_split
  bool pre_split = false;
  double train_fraction = 0.7;
  ingest::FeatureSchema schema;            // csv only
  synthetic::SyntheticConfig synth;        // synthetic only (seed is derived)
};

struct ExperimentConfig {
  DatasetSpec dataset;
  scoring::ModelKind model = scoring::ModelKind::logistic_regression;
  scoring::LossKind loss = scoring::LossKind::cross_entropy;
  scoring::TrainConfig train;
  Pipeline pipeline = Pipeline::preprocess;
  regularizers::RegularizerConfig regularizer;  // regularized pipeline
  scoring::TrainConfig finetune{0.01, 300, 0, 0, 1e-4};
  std::size_t tidp_grid = 1001;
  std::size_t wgf_grid = 51;
  std::size_t neighbor_count = 10;
  std::size_t histogram_bins = 100;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

// Seed tags for the derived substreams (arbitrary fixed constants).
inline constexpr std::uint64_t tag_generate = 0x67656E6572617465ull;
inline constexpr std::uint64_t tag_split = 0x73706C6974ull;
inline constexpr std::uint64_t tag_train = 0x747261696Eull;
inline constexpr std::uint64_t tag_finetune = 0x66696E6574756E65ull;

// ---------------------------------------------------------------------------
// Config <-> JSON

namespace detail {

inline scoring::ModelKind model_from_name(const std::string& s) {
  if (s == "logistic_regression" || s == "logistic")
    return scoring::ModelKind::logistic_regression;
  if (s == "mlp_3layer" || s == "mlp") return scoring::ModelKind::mlp_3layer;
  if (s == "margin") return scoring::ModelKind::margin;
  fail(errc::argument, "unknown model kind '" + s + "'");
}

inline const char* model_name(scoring::ModelKind k) {
  switch (k) {
    case scoring::ModelKind::logistic_regression: return "logistic_regression";
    case scoring::ModelKind::mlp_3layer: return "mlp_3layer";
    case scoring::ModelKind::margin: return "margin";
  }
  return "?";
}

inline scoring::LossKind loss_from_name(const std::string& s) {
  if (s == "cross_entropy") return scoring::LossKind::cross_entropy;
  if (s == "hinge") return scoring::LossKind::hinge;
  fail(errc::argument, "unknown loss '" + s + "'");
}

inline const char* loss_name(scoring::LossKind k) {
  return k == scoring::LossKind::cross_entropy ? "cross_entropy" : "hinge";
}

inline regularizers::RegKind reg_from_name(const std::string& s) {
  if (s == "emd") return regularizers::RegKind::emd;
  if (s == "kl_gaussian" || s == "kl") return regularizers::RegKind::kl_gaussian;
  fail(errc::argument, "unknown regularizer kind '" + s + "'");
}

inline ingest::ColumnKind column_kind_from_name(const std::string& s) {
  if (s == "numeric") return ingest::ColumnKind::numeric;
  if (s == "categorical") return ingest::ColumnKind::categorical;
  if (s == "binary") return ingest::ColumnKind::binary;
  fail(errc::argument, "unknown column kind '" + s + "'");
}

inline const char* column_kind_name(ingest::ColumnKind k) {
  switch (k) {
    case ingest::ColumnKind::numeric: return "numeric";
    case ingest::ColumnKind::categorical: return "categorical";
    case ingest::ColumnKind::binary: return "binary";
  }
  return "?";
}

}  // namespace detail

inline ordered_json to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  ordered_json d;
  d["kind"] = cfg.dataset.kind;
  if (cfg.dataset.kind == "synthetic") {
    const auto& s = cfg.dataset.synth;
    d["synthetic"] = {{"family", synthetic::family_name(s.family)},
                      {"n_per_group", s.n_per_group},
                      {"dim", s.dim},
                      {"score_shift", s.score_shift},
                      {"score_sd", s.score_sd},
                      {"noise_sd", s.noise_sd},
                      {"label_noise", s.label_noise},
                      {"proxy_gap", s.proxy_gap}};
  } else {
    d["path"] = cfg.dataset.path;
    d["pre_split"] = cfg.dataset.pre_split;
    if (cfg.dataset.pre_split) d["test_path"] = cfg.dataset.test_path;
  }
  if (cfg.dataset.kind == "csv") {
    ordered_json cols = ordered_json::array();
    for (const auto& c : cfg.dataset.schema.columns)
      cols.push_back({{"name", c.name}, {"kind", detail::column_kind_name(c.kind)}});
    d["schema"] = {{"label", cfg.dataset.schema.label_column},
                   {"sensitive", cfg.dataset.schema.sensitive_column},
                   {"columns", cols}};
  }
  d["train_fraction"] = cfg.dataset.train_fraction;
  j["dataset"] = d;
  j["model"] = {{"kind", detail::model_name(cfg.model)},
                {"loss", detail::loss_name(cfg.loss)},
                {"learning_rate", cfg.train.learning_rate},
                {"epochs", cfg.train.epochs},
                {"batch", cfg.train.batch},
                {"weight_decay", cfg.train.weight_decay}};
  j["pipeline"] = pipeline_name(cfg.pipeline);
  if (cfg.pipeline == Pipeline::regularized) {
    j["regularizer"] = {{"kind", regularizers::reg_kind_name(cfg.regularizer.kind)},
                        {"lambda", cfg.regularizer.lambda},
                        {"bin_count", cfg.regularizer.bin_count},
                        {"bandwidth", cfg.regularizer.bandwidth},
                        {"learning_rate", cfg.finetune.learning_rate},
                        {"epochs", cfg.finetune.epochs}};
  }
  j["metrics"] = {{"threshold_grid", cfg.tidp_grid}, {"epsilon_grid", cfg.wgf_grid}};
  j["neighbor_count"] = cfg.neighbor_count;
  j["histogram_bins"] = cfg.histogram_bins;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  return j;
}

inline ExperimentConfig config_from_json(const ordered_json& j) {
  ExperimentConfig cfg;
  require(j.is_object(), errc::parse, "experiment config must be a JSON object");
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    cfg.dataset.kind = d.value("kind", std::string("synthetic"));
    require(cfg.dataset.kind == "synthetic" || cfg.dataset.kind == "csv" ||
                cfg.dataset.kind == "fmds",
            errc::argument, "dataset.kind must be synthetic, csv, or fmds");
    cfg.dataset.path = d.value("path", std::string());
    cfg.dataset.test_path = d.value("test_path", std::string());
    cfg.dataset.pre_split = d.value("pre_split", false);
    cfg.dataset.train_fraction = d.value("train_fraction", 0.7);
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      auto& sc = cfg.dataset.synth;
      sc.family = synthetic::family_from_name(
          s.value("family", std::string("uniform_translate")));
      sc.n_per_group = s.value("n_per_group", std::size_t{1000});
      sc.dim = s.value("dim", std::size_t{10});
      sc.score_shift = s.value("score_shift", 0.2);
      sc.score_sd = s.value("score_sd", 0.15);
      sc.noise_sd = s.value("noise_sd", 0.4);
      sc.label_noise = s.value("label_noise", 0.0);
      sc.proxy_gap = s.value("proxy_gap", 0.0);
    }
    if (d.contains("schema")) {
      const auto& s = d.at("schema");
      cfg.dataset.schema.label_column = s.value("label", std::string());
      cfg.dataset.schema.sensitive_column = s.value("sensitive", std::string());
      if (s.contains("columns"))
        for (const auto& c : s.at("columns"))
          cfg.dataset.schema.columns.push_back(
              {c.at("name").get<std::string>(),
               detail::column_kind_from_name(
                   c.value("kind", std::string("numeric")))});
    }
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.model = detail::model_from_name(m.value("kind", std::string("logistic_regression")));
    cfg.loss = detail::loss_from_name(m.value(
        "loss", cfg.model == scoring::ModelKind::margin ? std::string("hinge")
                                                        : std::string("cross_entropy")));
    cfg.train.learning_rate = m.value("learning_rate", 0.05);
    cfg.train.epochs = m.value("epochs", 500);
    cfg.train.batch = m.value("batch", std::size_t{0});
    cfg.train.weight_decay = m.value("weight_decay", 1e-4);
  }
  cfg.pipeline = pipeline_from_name(j.value("pipeline", std::string("preprocess")));
  if (j.contains("regularizer")) {
    const auto& r = j.at("regularizer");
    cfg.regularizer.kind = detail::reg_from_name(r.value("kind", std::string("emd")));
    cfg.regularizer.lambda = r.value("lambda", 0.0);
    cfg.regularizer.bin_count = r.value("bin_count", std::size_t{50});
    cfg.regularizer.bandwidth = r.value("bandwidth", 0.01);
    cfg.finetune.learning_rate = r.value("learning_rate", 0.01);
    cfg.finetune.epochs = r.value("epochs", 300);
  }
  if (j.contains("metrics")) {
    cfg.tidp_grid = j.at("metrics").value("threshold_grid", std::size_t{1001});
    cfg.wgf_grid = j.at("metrics").value("epsilon_grid", std::size_t{51});
  }
  cfg.neighbor_count = j.value("neighbor_count", std::size_t{10});
  cfg.histogram_bins = j.value("histogram_bins", std::size_t{100});
  cfg.output_dir = j.value("output_dir", std::string("out"));
  cfg.seed = j.value("seed", std::uint64_t{0});
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io, "cannot open config " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(errc::parse, path + ": " + e.what());
  }
  return config_from_json(j);
}

inline void validate(const ExperimentConfig& cfg) {
  require(cfg.dataset.train_fraction > 0.0 && cfg.dataset.train_fraction < 1.0,
          errc::argument, "train_fraction must lie in (0,1)");
  require(cfg.neighbor_count >= 1, errc::argument, "neighbor_count must be >= 1");
  require(cfg.histogram_bins >= 2, errc::argument, "histogram_bins must be >= 2");
  require(!cfg.output_dir.empty(), errc::argument, "output_dir must be set");
  if (cfg.dataset.kind != "synthetic") {
    require(!cfg.dataset.path.empty(), errc::argument, "dataset.path must be set");
    require(std::filesystem::exists(cfg.dataset.path), errc::io,
            "dataset path does not exist: " + cfg.dataset.path);
    if (cfg.dataset.pre_split) {
      require(!cfg.dataset.test_path.empty(), errc::argument,
              "pre_split needs dataset.test_path");
      require(std::filesystem::exists(cfg.dataset.test_path), errc::io,
              "test path does not exist: " + cfg.dataset.test_path);
    }
  }
  if (cfg.dataset.kind == "csv") {
    require(!cfg.dataset.schema.columns.empty(), errc::schema,
            "csv dataset needs schema.columns");
    require(!cfg.dataset.schema.label_column.empty() &&
                !cfg.dataset.schema.sensitive_column.empty(),
            errc::schema, "csv dataset needs schema.label and schema.sensitive");
  }
  if (cfg.pipeline == Pipeline::regularized)
    require(cfg.regularizer.lambda >= 0.0, errc::argument, "lambda must be >= 0");
}

// ---------------------------------------------------------------------------
// RunReport

struct RunReport {
  ordered_json config_echo;
  Pipeline pipeline = Pipeline::preprocess;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t rejected_rows = 0;      // test rows in groups unseen at training
  std::size_t unseen_categories = 0;  // test cells encoded as all-zero blocks
  metrics::FairnessReport fairness;           // the pipeline's scores Q
  metrics::FairnessReport baseline_fairness;  // baseline scores R
  std::map<int, std::vector<double>> scores_q;  // per group id
  std::map<int, std::vector<double>> scores_r;
  std::map<int, double> rank_preservation;  // within-group Kendall tau (R vs Q)
  std::vector<int> test_groups;
  std::vector<int> test_labels;
  std::vector<std::size_t> test_source_rows;
  std::vector<std::pair<std::string, double>> timings;  // (phase, seconds)
  std::vector<std::string> written_files;
};

namespace detail {

inline ordered_json fairness_to_json(const metrics::FairnessReport& r) {
  ordered_json j;
  j["delta_tidp"] = r.delta_tidp;
  j["delta_wgf_avg"] = r.delta_wgf_avg;
  j["accuracy_at_half"] = r.accuracy_at_half;
  j["auc"] = r.auc;
  ordered_json cv = ordered_json::array();
  for (auto [t, v] : r.cv_curve) cv.push_back({t, v});
  j["cv_curve"] = cv;
  ordered_json wc = ordered_json::array();
  for (auto [e, v] : r.wgf_curve) wc.push_back({e, v});
  j["wgf_curve"] = wc;
  return j;
}

inline metrics::FairnessReport fairness_from_json(const ordered_json& j) {
  metrics::FairnessReport r;
  r.delta_tidp = j.at("delta_tidp").get<double>();
  r.delta_wgf_avg = j.at("delta_wgf_avg").get<double>();
  r.accuracy_at_half = j.at("accuracy_at_half").get<double>();
  r.auc = j.at("auc").get<double>();
  for (const auto& p : j.at("cv_curve"))
    r.cv_curve.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  for (const auto& p : j.at("wgf_curve"))
    r.wgf_curve.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  return r;
}

// Deterministic shortest-round-trip double for CSV cells.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// emit_report: report.json + scores/curve/performance CSVs.  Appends each
// written path to *written_out as soon as the file is opened, so a mid-emit
// failure leaves an accurate cleanup list.

inline std::vector<std::string> emit_report(const RunReport& rep,
                                            const std::string& dir,
                                            std::vector<std::string>* written_out = nullptr) {
  namespace fs = std::filesystem;
  std::vector<std::string> local;
  auto& written = written_out ? *written_out : local;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, errc::io, "cannot create output dir " + dir);

  auto open = [&](const std::string& name) {
    std::string path = (fs::path(dir) / name).string();
    std::ofstream os(path);
    require(os.good(), errc::io, "cannot write " + path);
    written.push_back(path);
    return os;
  };

  {
    ordered_json j;
    j["config"] = rep.config_echo;
    j["pipeline"] = pipeline_name(rep.pipeline);
    j["n_train"] = rep.n_train;
    j["n_test"] = rep.n_test;
    j["rejected_rows"] = rep.rejected_rows;
    j["unseen_categories"] = rep.unseen_categories;
    j["fairness"] = detail::fairness_to_json(rep.fairness);
    j["baseline_fairness"] = detail::fairness_to_json(rep.baseline_fairness);
    ordered_json rp;
    for (auto [g, tau] : rep.rank_preservation) rp[std::to_string(g)] = tau;
    j["rank_preservation"] = rp;
    ordered_json sq, sr;
    for (const auto& [g, v] : rep.scores_q) sq[std::to_string(g)] = v;
    for (const auto& [g, v] : rep.scores_r) sr[std::to_string(g)] = v;
    j["scores"] = {{pipeline_name(rep.pipeline), sq}, {"baseline", sr}};
    j["timings_file"] = "timings.json";
    auto os = open("report.json");
    os << j.dump(2) << "\n";
    require(os.good(), errc::io, "write failed: report.json");
  }
  {
    // Wall-clock sidecar: intentionally outside the deterministic surface.
    ordered_json j;
    for (const auto& [phase, sec] : rep.timings) j[phase] = sec;
    auto os = open("timings.json");
    os << j.dump(2) << "\n";
  }

  const std::string pname = pipeline_name(rep.pipeline);
  for (const auto& [g, scores] : rep.scores_q) {
    auto os = open("scores_" + pname + "_" + std::to_string(g) + ".csv");
    os << "index,source_row,label,score\n";
    std::size_t row = 0;
    for (std::size_t i = 0; i < rep.test_groups.size() && row < scores.size(); ++i) {
      if (rep.test_groups[i] != g) continue;
      os << row << "," << rep.test_source_rows[i] << "," << rep.test_labels[i]
         << "," << detail::fmt(scores[row]) << "\n";
      ++row;
    }
  }
  if (rep.pipeline != Pipeline::baseline) {
    for (const auto& [g, scores] : rep.scores_r) {
      auto os = open("scores_baseline_" + std::to_string(g) + ".csv");
      os << "index,source_row,label,score\n";
      std::size_t row = 0;
      for (std::size_t i = 0; i < rep.test_groups.size() && row < scores.size(); ++i) {
        if (rep.test_groups[i] != g) continue;
        os << row << "," << rep.test_source_rows[i] << "," << rep.test_labels[i]
           << "," << detail::fmt(scores[row]) << "\n";
        ++row;
      }
    }
  }
  {
    auto os = open("tidp_curve.csv");
    os << "threshold,cv_" << pname << ",cv_baseline\n";
    for (std::size_t i = 0; i < rep.fairness.cv_curve.size(); ++i)
      os << detail::fmt(rep.fairness.cv_curve[i].first) << ","
         << detail::fmt(rep.fairness.cv_curve[i].second) << ","
         << detail::fmt(rep.baseline_fairness.cv_curve[i].second) << "\n";
  }
  {
    auto os = open("wgf_curve.csv");
    os << "epsilon,delta_wgf_" << pname << "\n";
    for (const auto& [e, v] : rep.fairness.wgf_curve)
      os << detail::fmt(e) << "," << detail::fmt(v) << "\n";
  }
  {
    auto os = open("performance.csv");
    os << "pipeline,accuracy_at_half,auc\n";
    os << pname << "," << detail::fmt(rep.fairness.accuracy_at_half) << ","
       << detail::fmt(rep.fairness.auc) << "\n";
    os << "baseline," << detail::fmt(rep.baseline_fairness.accuracy_at_half)
       << "," << detail::fmt(rep.baseline_fairness.auc) << "\n";
  }
  if (written_out) return *written_out;
  return local;
}

// Round-trips report.json back into the value side of a RunReport.
inline RunReport load_run_report(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io, "cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(errc::parse, path + ": " + e.what());
  }
  RunReport rep;
  rep.config_echo = j.at("config");
  rep.pipeline = pipeline_from_name(j.at("pipeline").get<std::string>());
  rep.n_train = j.at("n_train").get<std::size_t>();
  rep.n_test = j.at("n_test").get<std::size_t>();
  rep.rejected_rows = j.at("rejected_rows").get<std::size_t>();
  rep.unseen_categories = j.at("unseen_categories").get<std::size_t>();
  rep.fairness = detail::fairness_from_json(j.at("fairness"));
  rep.baseline_fairness = detail::fairness_from_json(j.at("baseline_fairness"));
  for (const auto& [k, v] : j.at("rank_preservation").items())
    rep.rank_preservation[std::stoi(k)] = v.get<double>();
  const auto& scores = j.at("scores");
  for (const auto& [k, v] : scores.at(pipeline_name(rep.pipeline)).items())
    rep.scores_q[std::stoi(k)] = v.get<std::vector<double>>();
  for (const auto& [k, v] : scores.at("baseline").items())
    rep.scores_r[std::stoi(k)] = v.get<std::vector<double>>();
  return rep;
}

// ---------------------------------------------------------------------------
// run_experiment

namespace detail {

struct IngestResult {
  ingest::Dataset train_raw;
  ingest::Dataset test_raw;
};

inline IngestResult ingest_stage(const ExperimentConfig& cfg) {
  IngestResult out;
  if (cfg.dataset.kind == "synthetic") {
    synthetic::SyntheticConfig sc = cfg.dataset.synth;
    sc.seed = derive_seed(cfg.seed, tag_generate);
    ingest::Dataset full = synthetic::generate(sc);
    auto split = ingest::split_dataset(full, cfg.dataset.train_fraction,
                                       derive_seed(cfg.seed, tag_split));
    out.train_raw = std::move(split.train);
    out.test_raw = std::move(split.test);
    return out;
  }
  if (cfg.dataset.kind == "fmds") {
    ingest::Dataset full = ingest::load_fmds(cfg.dataset.path);
    auto split = ingest::split_dataset(full, cfg.dataset.train_fraction,
                                       derive_seed(cfg.seed, tag_split));
    out.train_raw = std::move(split.train);
    out.test_raw = std::move(split.test);
    return out;
  }
  // csv
  out.train_raw = ingest::load_table(cfg.dataset.path, cfg.dataset.schema);
  if (cfg.dataset.pre_split) {
    out.test_raw = ingest::load_table(cfg.dataset.test_path, cfg.dataset.schema);
    // The two files may have met sensitive values in different orders; remap
    // test group ids onto the training file's coding (new values appended).
    auto& train_gv = out.train_raw.schema.group_values;
    const auto& test_gv = out.test_raw.schema.group_values;
    std::vector<std::string> merged = train_gv;
    std::vector<int> remap(test_gv.size());
    for (std::size_t i = 0; i < test_gv.size(); ++i) {
      auto it = std::find(merged.begin(), merged.end(), test_gv[i]);
      if (it == merged.end()) {
        merged.push_back(test_gv[i]);
        remap[i] = static_cast<int>(merged.size());
      } else {
        remap[i] = static_cast<int>(it - merged.begin()) + 1;
      }
    }
    for (int& g : out.test_raw.groups) g = remap[static_cast<std::size_t>(g - 1)];
    out.test_raw.schema.group_values = merged;
  } else {
    auto split = ingest::split_dataset(out.train_raw, cfg.dataset.train_fraction,
                                       derive_seed(cfg.seed, tag_split));
    out.train_raw = std::move(split.train);
    out.test_raw = std::move(split.test);
  }
  return out;
}

}  // namespace detail

inline RunReport run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  validate(cfg);

  RunReport rep;
  rep.config_echo = to_json(cfg);
  rep.pipeline = cfg.pipeline;
  std::vector<std::string>& written = rep.written_files;

  auto run_stage = [&](const char* name, auto&& body) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      for (const auto& p : written) {
        std::error_code ec;
        fs::remove(p, ec);
      }
      fail(errc::stage_failure, std::string("stage ") + name + ": " + e.what());
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.timings.emplace_back(name, sec);
  };

  auto track = [&](const std::string& path) { written.push_back(path); };
  auto outpath = [&](const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
  };

  // --- training-side pipeline: everything below touches only train data -----
  ingest::Dataset train, test_raw_holder;
  run_stage("ingest", [&] {
    auto r = detail::ingest_stage(cfg);
    train = std::move(r.train_raw);
    test_raw_holder = std::move(r.test_raw);
  });

  ingest::Encoder encoder;
  run_stage("encode", [&] {
    encoder = ingest::Encoder::fit(train);
    train = encoder.transform(train);
    rep.n_train = train.size();
  });

  scoring::ScoringModel base;
  run_stage("train_baseline", [&] {
    scoring::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, tag_train);
    base = scoring::train_baseline(train, cfg.model, cfg.loss, tc);
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    require(!ec, errc::io, "cannot create output dir " + cfg.output_dir);
    track(outpath("model.fmmd"));
    scoring::save_fmmd(base, outpath("model.fmmd"));
    track(outpath("train.fmds"));
    ingest::save_fmds(train, outpath("train.fmds"));
  });

  scoring::ScoringModel tuned = base;
  std::map<int, manifold::CanonicalMapping> mappings;
  if (cfg.pipeline == Pipeline::preprocess) {
    run_stage("build_mappings", [&] {
      std::vector<double> pop_scores = scoring::score(base, train.features);
      for (int gid : train.group_ids()) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < train.size(); ++i)
          if (train.groups[i] == gid) rows.push_back(i);
        Matrix gf(rows.size(), train.dim());
        std::vector<double> gs(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          gf.set_row(i, train.features.row_copy(rows[i]));
          gs[i] = pop_scores[rows[i]];
        }
        std::vector<double> matched =
            distmatch::histogram_specify(gs, pop_scores, cfg.histogram_bins);
        auto table = correspondence::build_correspondences(matched, pop_scores, gid);
        auto mapping = manifold::build_mapping(gf, std::move(table),
                                               train.features,
                                               cfg.neighbor_count, gid);
        // Leakage guard: the mapping must be built from training rows alone.
        require(mapping.tree.size() == rows.size(), errc::stage_failure,
                "leakage guard: tree size vs group training rows");
        require(mapping.population_features.rows() == train.size(),
                errc::stage_failure,
                "leakage guard: population block vs training rows");
        track(outpath("mapping_g" + std::to_string(gid) + ".fmkd"));
        manifold::save_fmkd(mapping, outpath("mapping_g" + std::to_string(gid) + ".fmkd"));
        mappings.emplace(gid, std::move(mapping));
      }
    });
  } else if (cfg.pipeline == Pipeline::regularized) {
    run_stage("finetune", [&] {
      scoring::TrainConfig ft = cfg.finetune;
      ft.seed = derive_seed(cfg.seed, tag_finetune);
      tuned = regularizers::finetune(base, train, cfg.regularizer, ft);
      track(outpath("model_tuned.fmmd"));
      scoring::save_fmmd(tuned, outpath("model_tuned.fmmd"));
    });
  }

  // --- test side: the artifacts above are frozen from here on ---------------
  ingest::Dataset test;
  run_stage("encode_test", [&] {
    test = encoder.transform(test_raw_holder, &rep.unseen_categories);
    if (cfg.pipeline == Pipeline::preprocess) {
      // Rows whose group never appeared at training time have no T^(i);
      // reject them with a count rather than inventing a mapping.
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < test.size(); ++i)
        if (mappings.count(test.groups[i])) keep.push_back(i);
      rep.rejected_rows = test.size() - keep.size();
      if (rep.rejected_rows > 0) {
        ingest::Dataset kept;
        kept.schema = test.schema;
        kept.features = Matrix(keep.size(), test.dim());
        for (std::size_t i = 0; i < keep.size(); ++i) {
          kept.features.set_row(i, test.features.row_copy(keep[i]));
          kept.labels.push_back(test.labels[keep[i]]);
          kept.groups.push_back(test.groups[keep[i]]);
          kept.source_rows.push_back(test.source_rows.empty() ? keep[i]
                                                              : test.source_rows[keep[i]]);
        }
        test = std::move(kept);
      }
    }
    rep.n_test = test.size();
    rep.test_groups = test.groups;
    rep.test_labels = test.labels;
    rep.test_source_rows = test.source_rows;
    track(outpath("test.fmds"));
    ingest::save_fmds(test, outpath("test.fmds"));
  });

  std::vector<double> Q, R;
  run_stage("score", [&] {
    R = scoring::score(base, test.features);
    if (cfg.pipeline == Pipeline::baseline) {
      Q = R;
    } else if (cfg.pipeline == Pipeline::regularized) {
      Q = scoring::score(tuned, test.features);
    } else {
      Q.resize(test.size());
      for (const auto& [gid, mapping] : mappings) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < test.size(); ++i)
          if (test.groups[i] == gid) rows.push_back(i);
        if (rows.empty()) continue;
        ingest::Dataset part;
        part.schema = test.schema;
        part.features = Matrix(rows.size(), test.dim());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          part.features.set_row(i, test.features.row_copy(rows[i]));
          part.labels.push_back(test.labels[rows[i]]);
          part.groups.push_back(gid);
          part.source_rows.push_back(rows[i]);
        }
        ingest::Dataset mapped = manifold::map_dataset(mapping, part);
        std::vector<double> qs = scoring::score(base, mapped.features);
        for (std::size_t i = 0; i < rows.size(); ++i) Q[rows[i]] = qs[i];
      }
    }
  });

  run_stage("metrics", [&] {
    auto ids = test.group_ids();
    require(ids.size() == 2, errc::argument,
            "fairness metrics need exactly 2 groups in the test partition, got " +
                std::to_string(ids.size()));
    std::vector<double> q1, q2, r1, r2;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (test.groups[i] == ids[0]) {
        q1.push_back(Q[i]);
        r1.push_back(R[i]);
      } else {
        q2.push_back(Q[i]);
        r2.push_back(R[i]);
      }
    }
    rep.fairness = metrics::make_report(q1, q2, Q, R, test.groups, test.labels,
                                        cfg.tidp_grid, cfg.wgf_grid);
    rep.baseline_fairness = metrics::make_report(r1, r2, R, R, test.groups,
                                                 test.labels, cfg.tidp_grid,
                                                 cfg.wgf_grid);
    rep.scores_q[ids[0]] = q1;
    rep.scores_q[ids[1]] = q2;
    rep.scores_r[ids[0]] = r1;
    rep.scores_r[ids[1]] = r2;
    if (cfg.pipeline == Pipeline::baseline) {
      rep.rank_preservation[ids[0]] = 1.0;
      rep.rank_preservation[ids[1]] = 1.0;
    } else {
      rep.rank_preservation[ids[0]] = metrics::kendall_tau(r1, q1);
      rep.rank_preservation[ids[1]] = metrics::kendall_tau(r2, q2);
    }
  });

  run_stage("emit", [&] { emit_report(rep, cfg.output_dir, &written); });
  return rep;
}

// ---------------------------------------------------------------------------
// compare_pipelines

enum class Matching { match_wgf, match_tidp };

inline const char* matching_name(Matching m) {
  return m == Matching::match_wgf ? "match_wgf" : "match_tidp";
}

namespace detail {

// Nearest |value - target| among (lambda, value) candidates; equidistant
// candidates resolve to the lower lambda (stated tie rule).
inline std::size_t select_lambda(
    const std::vector<std::pair<double, double>>& candidates, double target) {
  require(!candidates.empty(), errc::argument, "empty lambda candidate set");
  std::size_t best = 0;
  double best_gap = std::abs(candidates[0].second - target);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    double gap = std::abs(candidates[i].second - target);
    if (gap < best_gap ||
        (gap == best_gap && candidates[i].first < candidates[best].first)) {
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

}  // namespace detail

struct ComparisonColumn {
  std::string label;
  std::string reg_kind;  // empty for the preprocess / baseline columns
  std::string model;
  double lambda = 0.0;
  double delta_tidp = 0.0;
  double delta_wgf_avg = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;
  // match_wgf: CV-vs-threshold curve; match_tidp: Delta_WGF-vs-epsilon curve.
  std::vector<std::pair<double, double>> curve;
};

struct ComparisonTable {
  Matching matching = Matching::match_wgf;
  double preprocess_delta_wgf = 0.0;
  double preprocess_delta_tidp = 0.0;
  std::vector<ComparisonColumn> columns;  // [0] preprocess, [1] baseline, then selections
};

inline ComparisonTable compare_pipelines(const std::vector<ExperimentConfig>& configs,
                                         Matching matching) {
  const ExperimentConfig* pre_cfg = nullptr;
  std::vector<const ExperimentConfig*> reg_cfgs;
  for (const auto& c : configs) {
    if (c.pipeline == Pipeline::preprocess) {
      require(pre_cfg == nullptr, errc::argument,
              "compare_pipelines needs exactly one preprocess config");
      pre_cfg = &c;
    } else if (c.pipeline == Pipeline::regularized) {
      reg_cfgs.push_back(&c);
    }
  }
  require(pre_cfg != nullptr, errc::argument,
          "compare_pipelines needs exactly one preprocess config");
  require(!reg_cfgs.empty(), errc::argument,
          "compare_pipelines needs a nonempty regularized sweep");

  RunReport pre = run_experiment(*pre_cfg);

  // Sweep cells grouped by (regularizer kind, model, lambda); trials with the
  // same key are averaged (scalars and curves pointwise).
  struct Cell {
    std::string kind, model;
    double lambda;
    std::vector<RunReport> reports;
  };
  std::vector<Cell> cells;
  for (const ExperimentConfig* rc : reg_cfgs) {
    RunReport r = run_experiment(*rc);
    std::string kind = regularizers::reg_kind_name(rc->regularizer.kind);
    std::string model = detail::model_name(rc->model);
    auto it = std::find_if(cells.begin(), cells.end(), [&](const Cell& c) {
      return c.kind == kind && c.model == model && c.lambda == rc->regularizer.lambda;
    });
    if (it == cells.end()) {
      cells.push_back({kind, model, rc->regularizer.lambda, {}});
      it = cells.end() - 1;
    }
    it->reports.push_back(std::move(r));
  }

  auto average_column = [](const Cell& c) {
    ComparisonColumn col;
    col.reg_kind = c.kind;
    col.model = c.model;
    col.lambda = c.lambda;
    double n = static_cast<double>(c.reports.size());
    for (const auto& r : c.reports) {
      col.delta_tidp += r.fairness.delta_tidp / n;
      col.delta_wgf_avg += r.fairness.delta_wgf_avg / n;
      col.accuracy += r.fairness.accuracy_at_half / n;
      col.auc += r.fairness.auc / n;
    }
    return col;
  };

  ComparisonTable table;
  table.matching = matching;
  table.preprocess_delta_wgf = pre.fairness.delta_wgf_avg;
  table.preprocess_delta_tidp = pre.fairness.delta_tidp;

  const bool by_wgf = matching == Matching::match_wgf;
  double target = by_wgf ? table.preprocess_delta_wgf : table.preprocess_delta_tidp;

  ComparisonColumn pre_col;
  pre_col.label = "preprocess";
  pre_col.model = detail::model_name(pre_cfg->model);
  pre_col.delta_tidp = pre.fairness.delta_tidp;
  pre_col.delta_wgf_avg = pre.fairness.delta_wgf_avg;
  pre_col.accuracy = pre.fairness.accuracy_at_half;
  pre_col.auc = pre.fairness.auc;
  pre_col.curve = by_wgf ? pre.fairness.cv_curve : pre.fairness.wgf_curve;
  table.columns.push_back(std::move(pre_col));

  ComparisonColumn base_col;
  base_col.label = "baseline";
  base_col.model = detail::model_name(pre_cfg->model);
  base_col.delta_tidp = pre.baseline_fairness.delta_tidp;
  base_col.delta_wgf_avg = pre.baseline_fairness.delta_wgf_avg;
  base_col.accuracy = pre.baseline_fairness.accuracy_at_half;
  base_col.auc = pre.baseline_fairness.auc;
  base_col.curve = by_wgf ? pre.baseline_fairness.cv_curve : pre.baseline_fairness.wgf_curve;
  table.columns.push_back(std::move(base_col));

  // Distinct (kind, model) combinations, in first-appearance order.
  std::vector<std::pair<std::string, std::string>> combos;
  for (const auto& c : cells) {
    auto key = std::make_pair(c.kind, c.model);
    if (std::find(combos.begin(), combos.end(), key) == combos.end())
      combos.push_back(key);
  }
  for (const auto& [kind, model] : combos) {
    std::vector<const Cell*> combo_cells;
    std::vector<ComparisonColumn> combo_cols;
    std::vector<std::pair<double, double>> candidates;  // (lambda, matched value)
    for (const auto& c : cells) {
      if (c.kind != kind || c.model != model) continue;
      combo_cells.push_back(&c);
      combo_cols.push_back(average_column(c));
      double value = by_wgf ? combo_cols.back().delta_wgf_avg
                            : combo_cols.back().delta_tidp;
      candidates.emplace_back(c.lambda, value);
    }
    std::size_t pick = detail::select_lambda(candidates, target);
    ComparisonColumn best_col = std::move(combo_cols[pick]);
    // Curve of the selected lambda: pointwise trial average.
    const auto& sel = *combo_cells[pick];
    const auto& first_curve = by_wgf ? sel.reports[0].fairness.cv_curve
                                     : sel.reports[0].fairness.wgf_curve;
    best_col.curve.assign(first_curve.size(), {0.0, 0.0});
    for (const auto& r : sel.reports) {
      const auto& cur = by_wgf ? r.fairness.cv_curve : r.fairness.wgf_curve;
      require(cur.size() == best_col.curve.size(), errc::dimension_mismatch,
              "sweep cells disagree on metric grid size");
      for (std::size_t i = 0; i < cur.size(); ++i) {
        best_col.curve[i].first = cur[i].first;
        best_col.curve[i].second +=
            cur[i].second / static_cast<double>(sel.reports.size());
      }
    }
    char lam[32];
    std::snprintf(lam, sizeof lam, "%g", sel.lambda);
    best_col.label = kind + " lambda=" + lam + " (" + model + ")";
    table.columns.push_back(std::move(best_col));
  }
  return table;
}

inline void emit_comparison(const ComparisonTable& table, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, errc::io, "cannot create output dir " + dir);

  {
    ordered_json j;
    j["matching"] = matching_name(table.matching);
    j["preprocess_delta_wgf"] = table.preprocess_delta_wgf;
    j["preprocess_delta_tidp"] = table.preprocess_delta_tidp;
    ordered_json cols = ordered_json::array();
    for (const auto& c : table.columns) {
      ordered_json jc;
      jc["label"] = c.label;
      if (!c.reg_kind.empty()) {
        jc["regularizer"] = c.reg_kind;
        jc["lambda"] = c.lambda;
      }
      jc["model"] = c.model;
      jc["delta_tidp"] = c.delta_tidp;
      jc["delta_wgf_avg"] = c.delta_wgf_avg;
      jc["accuracy_at_half"] = c.accuracy;
      jc["auc"] = c.auc;
      cols.push_back(jc);
    }
    j["columns"] = cols;
    std::string path = (fs::path(dir) / "comparison.json").string();
    std::ofstream os(path);
    require(os.good(), errc::io, "cannot write " + path);
    os << j.dump(2) << "\n";
  }
  {
    std::string path = (fs::path(dir) / "comparison_curves.csv").string();
    std::ofstream os(path);
    require(os.good(), errc::io, "cannot write " + path);
    os << (table.matching == Matching::match_wgf ? "threshold" : "epsilon");
    for (const auto& c : table.columns) {
      std::string h = c.label;
      for (char& ch : h)
        if (ch == ',' || ch == ' ') ch = '_';
      os << "," << h;
    }
    os << "\n";
    if (!table.columns.empty()) {
      std::size_t n = table.columns[0].curve.size();
      for (std::size_t i = 0; i < n; ++i) {
        os << detail::fmt(table.columns[0].curve[i].first);
        for (const auto& c : table.columns)
          os << "," << detail::fmt(c.curve[i].second);
        os << "\n";
      }
    }
    require(os.good(), errc::io, "write failed: " + path);
  }
}

}  // namespace fairmap::experiment
