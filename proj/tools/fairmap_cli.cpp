// fairmap command line: run / sweep / compare / synth.
//
// Every verb takes an optional --config JSON file; explicit flags override
// individual fields afterwards, so configs stay declarative and flags stay
// convenient for one-off deviations.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fairmap/fairmap.hpp"

using namespace fairmap;
namespace fs = std::filesystem;

namespace {

// Flag mirror of ExperimentConfig.  Values land here; only the ones the user
// actually passed are copied onto the config (after the config file loads).
struct ConfigFlags {
  std::string config_path;
  std::string dataset_kind, dataset_path, test_path;
  bool pre_split = false;
  double train_fraction = 0.7;
  std::string family;
  std::size_t n_per_group = 1000, dim = 10;
  double score_shift = 0.2, score_sd = 0.15, noise_sd = 0.4;
  double label_noise = 0.0, proxy_gap = 0.0;
  std::string model, loss, pipeline, reg_kind;
  double learning_rate = 0.05, weight_decay = 1e-4;
  int epochs = 500;
  std::size_t batch = 0;
  double lambda = 0.0, bandwidth = 0.01;
  std::size_t bin_count = 50;
  double ft_learning_rate = 0.01;
  int ft_epochs = 300;
  std::size_t tidp_grid = 1001, wgf_grid = 51;
  std::size_t neighbor_count = 10, histogram_bins = 100;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

void add_config_flags(CLI::App* sub, ConfigFlags& f) {
  sub->add_option("--config", f.config_path, "experiment config JSON file")
      ->check(CLI::ExistingFile);
  sub->add_option("--dataset-kind", f.dataset_kind, "synthetic | csv | fmds");
  sub->add_option("--dataset-path", f.dataset_path, "csv/fmds input file");
  sub->add_option("--test-path", f.test_path, "test csv (with --pre-split)");
  sub->add_flag("--pre-split", f.pre_split, "dataset ships as train/test files");
  sub->add_option("--train-fraction", f.train_fraction, "train share of a single file");
  sub->add_option("--family", f.family, "synthetic family: uniform_translate | gaussian");
  sub->add_option("--n-per-group", f.n_per_group, "synthetic rows per group");
  sub->add_option("--dim", f.dim, "synthetic feature dimension");
  sub->add_option("--score-shift", f.score_shift, "synthetic group score-mean shift");
  sub->add_option("--score-sd", f.score_sd, "synthetic score spread (gaussian family)");
  sub->add_option("--noise-sd", f.noise_sd, "synthetic feature noise sd");
  sub->add_option("--label-noise", f.label_noise, "synthetic label flip probability");
  sub->add_option("--proxy-gap", f.proxy_gap, "synthetic proxy feature group gap");
  sub->add_option("--model", f.model,
                  "logistic_regression | mlp_3layer | margin");
  sub->add_option("--loss", f.loss, "cross_entropy | hinge");
  sub->add_option("--learning-rate", f.learning_rate, "baseline training rate");
  sub->add_option("--epochs", f.epochs, "baseline training epochs");
  sub->add_option("--batch", f.batch, "minibatch size (0 = full batch)");
  sub->add_option("--weight-decay", f.weight_decay, "L2 on weights (margin models)");
  sub->add_option("--pipeline", f.pipeline, "preprocess | baseline | regularized");
  sub->add_option("--reg-kind", f.reg_kind, "emd | kl_gaussian");
  sub->add_option("--lambda", f.lambda, "regularizer strength");
  sub->add_option("--bin-count", f.bin_count, "soft histogram bins (emd)");
  sub->add_option("--bandwidth", f.bandwidth, "soft histogram kernel width (emd)");
  sub->add_option("--ft-learning-rate", f.ft_learning_rate, "fine-tune rate");
  sub->add_option("--ft-epochs", f.ft_epochs, "fine-tune epochs");
  sub->add_option("--tidp-grid", f.tidp_grid, "threshold grid size");
  sub->add_option("--wgf-grid", f.wgf_grid, "epsilon grid size");
  sub->add_option("--neighbor-count,-k", f.neighbor_count, "k-NN neighbors for T");
  sub->add_option("--histogram-bins", f.histogram_bins, "specification histogram bins");
  sub->add_option("--output-dir,-o", f.output_dir, "artifact directory");
  sub->add_option("--seed", f.seed, "master seed");
}

experiment::ExperimentConfig build_config(const CLI::App* sub, const ConfigFlags& f) {
  experiment::ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = experiment::load_config(f.config_path);
  auto set = [&](const char* flag) { return sub->count(flag) > 0; };
  if (set("--dataset-kind")) cfg.dataset.kind = f.dataset_kind;
  if (set("--dataset-path")) cfg.dataset.path = f.dataset_path;
  if (set("--test-path")) cfg.dataset.test_path = f.test_path;
  if (set("--pre-split")) cfg.dataset.pre_split = f.pre_split;
  if (set("--train-fraction")) cfg.dataset.train_fraction = f.train_fraction;
  if (set("--family"))
    cfg.dataset.synth.family = synthetic::family_from_name(f.family);
  if (set("--n-per-group")) cfg.dataset.synth.n_per_group = f.n_per_group;
  if (set("--dim")) cfg.dataset.synth.dim = f.dim;
  if (set("--score-shift")) cfg.dataset.synth.score_shift = f.score_shift;
  if (set("--score-sd")) cfg.dataset.synth.score_sd = f.score_sd;
  if (set("--noise-sd")) cfg.dataset.synth.noise_sd = f.noise_sd;
  if (set("--label-noise")) cfg.dataset.synth.label_noise = f.label_noise;
  if (set("--proxy-gap")) cfg.dataset.synth.proxy_gap = f.proxy_gap;
  if (set("--model")) cfg.model = experiment::detail::model_from_name(f.model);
  if (set("--loss")) cfg.loss = experiment::detail::loss_from_name(f.loss);
  if (set("--learning-rate")) cfg.train.learning_rate = f.learning_rate;
  if (set("--epochs")) cfg.train.epochs = f.epochs;
  if (set("--batch")) cfg.train.batch = f.batch;
  if (set("--weight-decay")) cfg.train.weight_decay = f.weight_decay;
  if (set("--pipeline")) cfg.pipeline = experiment::pipeline_from_name(f.pipeline);
  if (set("--reg-kind"))
    cfg.regularizer.kind = experiment::detail::reg_from_name(f.reg_kind);
  if (set("--lambda")) cfg.regularizer.lambda = f.lambda;
  if (set("--bin-count")) cfg.regularizer.bin_count = f.bin_count;
  if (set("--bandwidth")) cfg.regularizer.bandwidth = f.bandwidth;
  if (set("--ft-learning-rate")) cfg.finetune.learning_rate = f.ft_learning_rate;
  if (set("--ft-epochs")) cfg.finetune.epochs = f.ft_epochs;
  if (set("--tidp-grid")) cfg.tidp_grid = f.tidp_grid;
  if (set("--wgf-grid")) cfg.wgf_grid = f.wgf_grid;
  if (set("--neighbor-count")) cfg.neighbor_count = f.neighbor_count;
  if (set("--histogram-bins")) cfg.histogram_bins = f.histogram_bins;
  if (set("--output-dir")) cfg.output_dir = f.output_dir;
  if (set("--seed")) cfg.seed = f.seed;
  return cfg;
}

int cmd_run(const CLI::App* sub, const ConfigFlags& f) {
  auto cfg = build_config(sub, f);
  auto rep = experiment::run_experiment(cfg);
  const char* pname = experiment::pipeline_name(rep.pipeline);
  std::printf("pipeline=%s n_train=%zu n_test=%zu rejected_rows=%zu unseen_categories=%zu\n",
              pname, rep.n_train, rep.n_test, rep.rejected_rows,
              rep.unseen_categories);
  std::printf("delta_tidp   baseline=%.6f %s=%.6f\n",
              rep.baseline_fairness.delta_tidp, pname, rep.fairness.delta_tidp);
  std::printf("delta_wgf    %s=%.6f (avg over epsilon grid, vs baseline scores)\n",
              pname, rep.fairness.delta_wgf_avg);
  std::printf("performance  %s: accuracy=%.4f auc=%.4f | baseline: accuracy=%.4f auc=%.4f\n",
              pname, rep.fairness.accuracy_at_half, rep.fairness.auc,
              rep.baseline_fairness.accuracy_at_half, rep.baseline_fairness.auc);
  for (auto [g, tau] : rep.rank_preservation)
    std::printf("rank_preservation group %d: %.6f\n", g, tau);
  std::printf("report: %s\n", (fs::path(cfg.output_dir) / "report.json").string().c_str());
  return 0;
}

int cmd_sweep(const CLI::App* sub, const ConfigFlags& f,
              const std::string& kind_arg, const std::vector<double>& lambdas,
              int trials, const std::string& out_csv) {
  auto cfg = build_config(sub, f);
  require(cfg.dataset.kind == "synthetic", errc::argument,
          "sweep regenerates data per trial and needs a synthetic dataset");
  require(!lambdas.empty(), errc::argument, "--lambdas must be nonempty");

  // One provider per trial: fresh data, fresh split, fresh baseline, all from
  // seeds derived off the master seed so the sweep is reproducible end to end.
  auto provider = [&cfg](int trial) {
    synthetic::SyntheticConfig sc = cfg.dataset.synth;
    sc.seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(trial));
    auto full = synthetic::generate(sc);
    auto split = ingest::split_dataset(
        full, cfg.dataset.train_fraction,
        derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(trial)));
    auto enc = ingest::Encoder::fit(split.train);
    regularizers::SweepTrial t;
    t.train = enc.transform(split.train);
    t.test = enc.transform(split.test);
    scoring::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, 3000 + static_cast<std::uint64_t>(trial));
    t.base = scoring::train_baseline(t.train, cfg.model, cfg.loss, tc);
    return t;
  };
  scoring::TrainConfig ft = cfg.finetune;
  ft.seed = cfg.seed;

  std::vector<regularizers::RegKind> kinds;
  if (kind_arg == "both") {
    kinds = {regularizers::RegKind::emd, regularizers::RegKind::kl_gaussian};
  } else {
    kinds = {experiment::detail::reg_from_name(kind_arg)};
  }
  regularizers::SweepTable table;
  for (auto kind : kinds) {
    auto part = regularizers::lambda_sweep(provider, kind, lambdas, trials, ft);
    std::printf("%s:\n", regularizers::reg_kind_name(kind));
    for (const auto& s : part.summarize())
      std::printf("  lambda=%-8g delta_tidp=%.4f+-%.4f delta_wgf=%.4f+-%.4f\n",
                  s.lambda, s.tidp_mean, s.tidp_std, s.wgf_mean, s.wgf_std);
    table.rows.insert(table.rows.end(), part.rows.begin(), part.rows.end());
  }
  table.to_csv(out_csv);
  std::printf("sweep table: %s\n", out_csv.c_str());
  return 0;
}

int cmd_compare(const std::string& configs_path, const std::string& matching_arg,
                const std::string& out_dir) {
  std::ifstream in(configs_path);
  require(in.good(), errc::io, "cannot open " + configs_path);
  experiment::ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(errc::parse, configs_path + ": " + e.what());
  }
  require(j.is_array() && !j.empty(), errc::parse,
          "compare expects a JSON array of experiment configs");
  std::vector<experiment::ExperimentConfig> configs;
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto cfg = experiment::config_from_json(j[i]);
    // keep per-run artifacts apart unless the file pinned a directory itself
    if (!j[i].contains("output_dir"))
      cfg.output_dir = (fs::path(out_dir) / ("cell_" + std::to_string(i))).string();
    configs.push_back(std::move(cfg));
  }
  experiment::Matching matching;
  if (matching_arg == "match_wgf") {
    matching = experiment::Matching::match_wgf;
  } else if (matching_arg == "match_tidp") {
    matching = experiment::Matching::match_tidp;
  } else {
    fail(errc::argument, "--matching must be match_wgf or match_tidp");
  }
  auto table = experiment::compare_pipelines(configs, matching);
  std::printf("matching=%s preprocess: delta_wgf=%.6f delta_tidp=%.6f\n",
              experiment::matching_name(table.matching),
              table.preprocess_delta_wgf, table.preprocess_delta_tidp);
  for (const auto& col : table.columns)
    std::printf("  %-44s delta_tidp=%.6f delta_wgf=%.6f accuracy=%.4f auc=%.4f\n",
                col.label.c_str(), col.delta_tidp, col.delta_wgf_avg,
                col.accuracy, col.auc);
  experiment::emit_comparison(table, out_dir);
  std::printf("comparison: %s\n", (fs::path(out_dir) / "comparison.json").string().c_str());
  return 0;
}

int cmd_synth(const synthetic::SyntheticConfig& sc, const std::string& format,
              const std::string& out_path) {
  auto ds = synthetic::generate(sc);
  if (format == "fmds") {
    ingest::save_fmds(ds, out_path);
  } else if (format == "csv") {
    std::ofstream os(out_path, std::ios::binary);
    require(os.good(), errc::io, "cannot write " + out_path);
    for (const auto& col : ds.schema.columns) os << col.name << ",";
    os << ds.schema.sensitive_column << "," << ds.schema.label_column << "\n";
    char buf[40];
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (std::size_t c = 0; c < ds.dim(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", ds.features(i, c));
        os << buf << ",";
      }
      os << ds.schema.group_values[static_cast<std::size_t>(ds.groups[i]) - 1]
         << "," << ds.labels[i] << "\n";
    }
    require(os.good(), errc::io, "write failed: " + out_path);
  } else {
    fail(errc::argument, "--format must be fmds or csv");
  }
  std::printf("%zu rows x %zu features -> %s\n", ds.size(), ds.dim(),
              out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness pre-processing toolkit: canonical-domain mapping, "
               "baseline scoring, regularized fine-tuning, fairness metrics"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  auto* run = app.add_subcommand("run", "execute one experiment config");
  add_config_flags(run, run_flags);

  ConfigFlags sweep_flags;
  std::string sweep_kind = "both";
  std::vector<double> sweep_lambdas;
  int sweep_trials = 5;
  std::string sweep_out = "sweep.csv";
  auto* sweep = app.add_subcommand("sweep", "lambda sweep for the regularized pipeline");
  add_config_flags(sweep, sweep_flags);
  sweep->add_option("--kind", sweep_kind, "emd | kl_gaussian | both");
  sweep->add_option("--lambdas", sweep_lambdas, "lambda grid, comma separated")
      ->delimiter(',')
      ->required();
  sweep->add_option("--trials", sweep_trials, "independent trials per lambda");
  sweep->add_option("--out", sweep_out, "output CSV path");

  std::string cmp_configs, cmp_matching = "match_wgf", cmp_out = "comparison";
  auto* cmp = app.add_subcommand("compare", "matched-lambda pipeline comparison");
  cmp->add_option("--configs", cmp_configs, "JSON array of experiment configs")
      ->check(CLI::ExistingFile)
      ->required();
  cmp->add_option("--matching", cmp_matching, "match_wgf | match_tidp");
  cmp->add_option("--output-dir,-o", cmp_out, "comparison artifact directory");

  synthetic::SyntheticConfig synth_cfg;
  std::string synth_family = "uniform_translate", synth_format = "fmds";
  std::string synth_out = "data.fmds";
  auto* synth = app.add_subcommand("synth", "generate a synthetic two-group dataset");
  synth->add_option("--family", synth_family, "uniform_translate | gaussian");
  synth->add_option("--n-per-group", synth_cfg.n_per_group, "rows per group");
  synth->add_option("--dim", synth_cfg.dim, "feature dimension");
  synth->add_option("--score-shift", synth_cfg.score_shift, "group score-mean shift");
  synth->add_option("--score-sd", synth_cfg.score_sd, "score spread (gaussian)");
  synth->add_option("--noise-sd", synth_cfg.noise_sd, "feature noise sd");
  synth->add_option("--label-noise", synth_cfg.label_noise, "label flip probability");
  synth->add_option("--proxy-gap", synth_cfg.proxy_gap, "proxy feature group gap");
  synth->add_option("--seed", synth_cfg.seed, "generator seed");
  synth->add_option("--format", synth_format, "fmds | csv");
  synth->add_option("--out", synth_out, "output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run, run_flags);
    if (sweep->parsed())
      return cmd_sweep(sweep, sweep_flags, sweep_kind, sweep_lambdas,
                       sweep_trials, sweep_out);
    if (cmp->parsed()) return cmd_compare(cmp_configs, cmp_matching, cmp_out);
    if (synth->parsed()) {
      synth_cfg.family = synthetic::family_from_name(synth_family);
      return cmd_synth(synth_cfg, synth_format, synth_out);
    }
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
