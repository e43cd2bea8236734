#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "shiftsched/datagen.hpp"
#include "shiftsched/diagnostics.hpp"
#include "shiftsched/harness.hpp"
#include "shiftsched/predictors.hpp"
#include "shiftsched/scheduler.hpp"

namespace shiftsched::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

fs::path output_dir(const Globals& g) {
  fs::path dir;
  if (!g.out.empty()) {
    dir = g.out;
  } else if (const char* env = std::getenv("SHIFTSCHED_OUT"); env != nullptr && *env != '\0') {
    dir = env;
  } else {
    dir = ".";
  }
  fs::create_directories(dir);
  return dir;
}

bool explicit_output(const Globals& g) {
  const char* env = std::getenv("SHIFTSCHED_OUT");
  return !g.out.empty() || (env != nullptr && *env != '\0');
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path existing_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
  return path;
}

struct SimulateOpts {
  double theta = 1.0;
  double scale = 0.25;
  bool full = false;
  std::string noise = "gaussian";
  std::string phi = "forest";
  std::string seed_a;
  std::string seed_b;
};

SemiSyntheticData simulate_data(const SimulateOpts& o, std::uint64_t seed) {
  Dataset a;
  Dataset b;
  if (!o.seed_a.empty() || !o.seed_b.empty()) {
    a = load_csv(existing_file(o.seed_a, "--seed-a"), Setting::A);
    b = load_csv(existing_file(o.seed_b, "--seed-b"), Setting::B);
  } else {
    auto pops = builtin_seed_data(5830, 3866, derive_seed(seed, 7));
    a = std::move(pops.a);
    b = std::move(pops.b);
  }
  SemiSyntheticConfig cfg;
  cfg.theta = o.theta;
  const double scale = o.full ? 1.0 : o.scale;
  if (!(scale > 0.0)) throw UsageError("--scale must be positive");
  cfg.n = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::llround(5830.0 * scale)));
  cfg.m = std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::llround(3866.0 * scale)));
  cfg.noise_kind = parse_noise_kind(o.noise);
  cfg.phi_kind = parse_phi_kind(o.phi);
  cfg.seed = derive_seed(seed, 1000);
  const SemiSyntheticGenerator gen(a, b, cfg.phi_kind, derive_seed(seed, 11));
  SemiSyntheticData data = gen.generate(cfg);
  data.a.feature_names = a.feature_names;
  data.b.feature_names = a.feature_names;
  return data;
}

void add_simulate_options(CLI::App* cmd, SimulateOpts& o) {
  cmd->add_option("--theta", o.theta, "Mean-shift magnitude")->capture_default_str();
  cmd->add_option("--scale", o.scale, "Fraction of the full sample sizes")->capture_default_str();
  cmd->add_flag("--full", o.full, "Full sample sizes (5830 / 3866)");
  cmd->add_option("--noise", o.noise, "gaussian or uniform")->capture_default_str();
  cmd->add_option("--phi", o.phi, "forest or boosting")->capture_default_str();
  cmd->add_option("--seed-a", o.seed_a, "Seed CSV for setting A (default: built-in)");
  cmd->add_option("--seed-b", o.seed_b, "Seed CSV for setting B (default: built-in)");
}

int run_simulate(const Globals& g, const SimulateOpts& o, std::ostream& out) {
  const auto data = simulate_data(o, g.seed.value_or(1));
  const auto dir = output_dir(g);
  write_csv(data.a, dir / "setting_a.csv", true);
  write_csv(data.b, dir / "setting_b.csv", false);
  std::ostringstream due;
  due << "id,due\n";
  for (std::size_t i = 0; i < data.due_dates.size(); ++i) due << i << ',' << data.due_dates[i] << '\n';
  write_file(dir / "setting_b_due.csv", due.str());
  std::ostringstream labels;
  labels << "id,throughput_days\n";
  const auto& y = data.b.read_labels(LabelPurpose::export_data);
  for (std::size_t i = 0; i < y.size(); ++i) labels << i << ',' << harness::full_precision(y[i]) << '\n';
  write_file(dir / "setting_b_labels.csv", labels.str());
  out << "wrote " << data.a.rows() << " A rows and " << data.b.rows() << " B rows to " << dir.string() << '\n';
  return 0;
}

struct DiagnoseOpts {
  SimulateOpts sim;
  std::string a;
  std::string b;
  int folds = 5;
  int repeats = 20;
};

int run_diagnose(const Globals& g, const DiagnoseOpts& o, std::ostream& out) {
  Matrix xa;
  Matrix xb;
  std::vector<std::string> names;
  if (!o.a.empty() || !o.b.empty()) {
    const auto a = load_csv(existing_file(o.a, "--a"), Setting::A);
    const auto b = load_csv(existing_file(o.b, "--b"), Setting::B);
    if (a.dims() != b.dims()) throw std::runtime_error("A and B have different feature counts");
    xa = a.features;
    xb = b.features;
    names = a.feature_names;
  } else {
    const auto data = simulate_data(o.sim, g.seed.value_or(1));
    xa = data.a.features;
    xb = data.b.features;
    names = data.a.feature_names;
  }
  diag::AdversarialParams p;
  p.folds = o.folds;
  p.repeats = o.repeats;
  p.seed = g.seed.value_or(1);
  const auto report = diag::adversarial_validation(xa, xb, p, names);
  const auto welch = diag::feature_welch(xa, xb);
  const auto dir = output_dir(g);
  write_file(dir / "shift_report.json", diag::to_text(report) + "\n");
  write_file(dir / "importance.csv", diag::importance_csv(report));
  std::ostringstream w;
  w << "feature,t,dof,p_value\n";
  for (std::size_t j = 0; j < welch.size(); ++j) {
    const std::string name = j < names.size() ? names[j] : "x" + std::to_string(j + 1);
    w << name << ',' << harness::full_precision(welch[j].t) << ',' << harness::full_precision(welch[j].dof) << ','
      << harness::full_precision(welch[j].p_value) << '\n';
  }
  write_file(dir / "welch.csv", w.str());
  out << "roc_auc " << report.roc_auc << '\n';
  for (std::size_t k = 0; k < std::min<std::size_t>(5, report.ranking.size()); ++k) {
    out << "  " << report.ranking[k].name << ' ' << report.ranking[k].importance << '\n';
  }
  return 0;
}

struct TrainOpts {
  std::string method = "dnn";
  std::string a;
  std::string b;
  std::string checkpoint;
  DnnHyper hyper;
  WdgrlParams wdgrl;
  ElasticNetConfig en;
};

int run_train(const Globals& g, const TrainOpts& o, std::ostream& out) {
  const auto a = load_csv(existing_file(o.a, "--a"), Setting::A);
  if (!a.labeled()) throw UsageError("--a must contain a throughput_days column");
  const std::uint64_t seed = g.seed.value_or(1);
  Predictor model;
  if (o.method == "elastic_net") {
    model = fit_elastic_net_predictor(a.features, a.read_labels(LabelPurpose::training), o.en.lambda, o.en.ratio);
  } else if (o.method == "dnn") {
    model = fit_dnn(a, o.hyper, seed);
  } else if (o.method == "wdgrl") {
    const auto b = load_csv(existing_file(o.b, "--b"), Setting::B);
    auto w = fit_wdgrl(a, b.features, o.hyper, o.wdgrl, seed);
    if (!w.log.epochs.empty()) {
      const auto& last = w.log.epochs.back();
      out << "final epoch: regression_mae " << last.regression_loss << ", wasserstein " << last.wasserstein
          << ", penalty " << last.penalty << '\n';
    }
    model = std::move(w);
  } else {
    throw UsageError("--method must be elastic_net, dnn or wdgrl");
  }
  const fs::path path = o.checkpoint.empty() ? output_dir(g) / "model.json" : fs::path(o.checkpoint);
  save_checkpoint(model, path);
  out << "checkpoint written to " << path.string() << '\n';
  return 0;
}

int run_predict(const Globals& g, const std::string& checkpoint, const std::string& input, std::ostream& out) {
  const auto model = load_checkpoint(existing_file(checkpoint, "--checkpoint"));
  const auto data = load_csv(existing_file(input, "--input"), Setting::B);
  const auto pred = predict(model, data.features);
  std::ostringstream csv;
  csv << "id,predicted_days\n";
  for (std::size_t i = 0; i < pred.size(); ++i) csv << i << ',' << harness::full_precision(pred[i]) << '\n';
  const auto path = output_dir(g) / "predictions.csv";
  write_file(path, csv.str());
  out << "wrote " << pred.size() << " predictions to " << path.string() << '\n';
  return 0;
}

int run_schedule(const Globals& g, const std::string& instance, std::int64_t node_cap, bool brute, std::ostream& out) {
  const auto inst = sched::load_instance(existing_file(instance, "--instance"));
  const auto res = brute ? sched::solve_bruteforce(inst) : sched::solve_branch_and_bound(inst, {node_cap});
  if (!res.feasible) {
    out << "infeasible\n";
  } else {
    out << "objective " << harness::full_precision(res.objective) << '\n';
    out << "optimal " << (res.optimal ? "true" : "false") << '\n';
  }
  if (explicit_output(g)) {
    const auto dir = output_dir(g);
    write_file(dir / "schedule.json", sched::schedule_to_text(inst, res) + "\n");
    write_file(dir / "schedule.csv", sched::schedule_to_csv(inst, res));
  }
  return res.feasible ? 0 : 2;
}

struct ExperimentOpts {
  bool full = false;
  std::optional<int> seeds;
  std::optional<int> threads;
};

int run_experiment_cmd(const Globals& g, const ExperimentOpts& o, std::ostream& out) {
  if (g.config.empty()) throw UsageError("experiment requires --config <path>");
  if (!fs::is_regular_file(g.config)) throw UsageError("config not found: " + g.config);
  harness::ExperimentConfig cfg;
  try {
    cfg = harness::load_config(g.config);
  } catch (const harness::ConfigError& e) {
    throw UsageError(e.what());
  }
  if (o.full) cfg.scale = 1.0;
  if (o.seeds) cfg.seeds = *o.seeds;
  if (o.threads) cfg.threads = *o.threads;
  if (g.seed) cfg.base_seed = *g.seed;
  const auto result = harness::run_experiment(cfg);
  const auto dir = output_dir(g);
  write_file(dir / "raw.csv", harness::raw_csv(result.records));
  harness::emit_report(result.table, harness::ReportFormat::csv, dir / "report.csv");
  harness::emit_report(result.table, harness::ReportFormat::markdown, dir / "report.md");
  harness::emit_report(result.table, harness::ReportFormat::json, dir / "report.json");
  nlohmann::json tuning{{"elastic_net", {{"lambda", result.tuning.elastic_net.lambda},
                                         {"ratio", result.tuning.elastic_net.ratio},
                                         {"cv_mae", result.tuning.elastic_net_cv_mae}}},
                        {"dnn", {{"extractor_width", result.tuning.dnn.extractor_width},
                                 {"epochs", result.tuning.dnn.epochs},
                                 {"batch_size", result.tuning.dnn.batch_size},
                                 {"l2", result.tuning.dnn.l2},
                                 {"dropout", result.tuning.dnn.dropout},
                                 {"cv_mae", result.tuning.dnn_cv_mae}}},
                        {"oracle_violations", result.oracle_violations}};
  write_file(dir / "tuning.json", tuning.dump(1) + "\n");
  out << harness::format_report(result.table, harness::ReportFormat::markdown);
  return 0;
}

int run_report(const Globals& g, const std::string& raw, const std::string& format, std::ostream& out) {
  std::ifstream in(existing_file(raw, "--raw"));
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto table = harness::aggregate(harness::parse_raw_csv(ss.str()));
  harness::ReportFormat fmt;
  try {
    fmt = harness::parse_report_format(format);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::string ext = fmt == harness::ReportFormat::csv ? "csv" : fmt == harness::ReportFormat::json ? "json" : "md";
  harness::emit_report(table, fmt, output_dir(g) / ("report." + ext));
  out << harness::format_report(table, fmt);
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Throughput-time prediction under shift and earliness/tardiness scheduling", "shiftsched"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Base seed");
  app.add_option("--config", g.config, "Experiment config file (JSON)");
  app.add_option("--out", g.out, "Output directory (default: $SHIFTSCHED_OUT or .)");

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "Generate semi-synthetic A/B datasets");
  add_simulate_options(simulate, sim);

  DiagnoseOpts diag_opts;
  auto* diagnose = app.add_subcommand("diagnose", "Adversarial validation and Welch tests");
  add_simulate_options(diagnose, diag_opts.sim);
  diagnose->add_option("--a", diag_opts.a, "Setting-A CSV");
  diagnose->add_option("--b", diag_opts.b, "Setting-B CSV");
  diagnose->add_option("--folds", diag_opts.folds)->capture_default_str();
  diagnose->add_option("--repeats", diag_opts.repeats)->capture_default_str();

  TrainOpts tr;
  auto* train = app.add_subcommand("train", "Fit a predictor and write a checkpoint");
  train->add_option("--method", tr.method, "elastic_net, dnn or wdgrl")->capture_default_str();
  train->add_option("--a", tr.a, "Labeled setting-A CSV");
  train->add_option("--b", tr.b, "Unlabeled setting-B CSV (wdgrl)");
  train->add_option("--checkpoint", tr.checkpoint, "Checkpoint path (default: <out>/model.json)");
  train->add_option("--width", tr.hyper.extractor_width)->capture_default_str();
  train->add_option("--epochs", tr.hyper.epochs)->capture_default_str();
  train->add_option("--batch", tr.hyper.batch_size)->capture_default_str();
  train->add_option("--l2", tr.hyper.l2)->capture_default_str();
  train->add_option("--dropout", tr.hyper.dropout)->capture_default_str();
  train->add_option("--lr", tr.hyper.learning_rate)->capture_default_str();
  train->add_option("--alpha", tr.wdgrl.alpha)->capture_default_str();
  train->add_option("--beta", tr.wdgrl.beta)->capture_default_str();
  train->add_option("--n-critic", tr.wdgrl.n_critic)->capture_default_str();
  train->add_option("--lambda", tr.en.lambda)->capture_default_str();
  train->add_option("--ratio", tr.en.ratio)->capture_default_str();

  std::string checkpoint;
  std::string input;
  auto* predict_cmd = app.add_subcommand("predict", "Predict throughput times from a checkpoint");
  predict_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file");
  predict_cmd->add_option("--input", input, "Feature CSV");

  std::string instance;
  std::int64_t node_cap = sched::SolverLimits{}.node_cap;
  bool brute = false;
  auto* schedule = app.add_subcommand("schedule", "Solve a scheduling instance file");
  schedule->add_option("--instance", instance, "Instance file (JSON)");
  schedule->add_option("--node-cap", node_cap)->capture_default_str();
  schedule->add_flag("--bruteforce", brute, "Exhaustive solver (small instances)");

  ExperimentOpts ex;
  auto* experiment = app.add_subcommand("experiment", "Run the theta x method x replicate experiment");
  experiment->add_flag("--full", ex.full, "Full sample sizes");
  experiment->add_option("--seeds", ex.seeds, "Override replicate count");
  experiment->add_option("--threads", ex.threads, "Worker threads");

  std::string raw;
  std::string format = "markdown";
  auto* report = app.add_subcommand("report", "Re-aggregate a raw records CSV");
  report->add_option("--raw", raw, "raw.csv from an experiment");
  report->add_option("--format", format, "csv, json or markdown")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return 1;
  }

  try {
    if (simulate->parsed()) return run_simulate(g, sim, out);
    if (diagnose->parsed()) return run_diagnose(g, diag_opts, out);
    if (train->parsed()) return run_train(g, tr, out);
    if (predict_cmd->parsed()) return run_predict(g, checkpoint, input, out);
    if (schedule->parsed()) return run_schedule(g, instance, node_cap, brute, out);
    if (experiment->parsed()) return run_experiment_cmd(g, ex, out);
    if (report->parsed()) return run_report(g, raw, format, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace shiftsched::cli
