#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "shiftsched/harness.hpp"

namespace shiftsched::harness {
namespace {

struct Context {
  const ExperimentConfig& cfg;
  const SemiSyntheticGenerator& gen;
  ElasticNetConfig en;
  DnnHyper hyper;
};

std::uint64_t replicate_seed(const ExperimentConfig& cfg, int s) {
  return derive_seed(cfg.base_seed, 1000 + static_cast<std::uint64_t>(s));
}

SemiSyntheticData generate(const ExperimentConfig& cfg, const SemiSyntheticGenerator& gen, double theta,
                           std::uint64_t seed) {
  SemiSyntheticConfig sc;
  sc.theta = theta;
  sc.n = cfg.rows_a();
  sc.m = cfg.rows_b();
  sc.noise_kind = cfg.noise;
  sc.phi_kind = cfg.phi;
  sc.slack_sigma = cfg.slack_sigma;
  sc.horizon_spread = cfg.horizon_spread;
  sc.seed = seed;
  return gen.generate(sc);
}

double mean_absolute_error(std::span<const double> pred, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(pred[i] - y[i]);
  return s / static_cast<double>(y.size());
}

std::optional<double> sweep_value(const std::string& method, const char* prefix) {
  const std::string p(prefix);
  if (method.rfind(p, 0) != 0) return std::nullopt;
  return std::stod(method.substr(p.size()));
}

struct ReplicateOutput {
  std::vector<RawRecord> records;
  std::vector<AuditEvent> audit;
  int oracle_violations = 0;
};

ReplicateOutput run_replicate(const Context& ctx, int s) {
  const auto& cfg = ctx.cfg;
  const std::uint64_t rep = replicate_seed(cfg, s);
  const std::uint64_t net_seed = derive_seed(rep, 31);
  const auto methods = cfg.all_methods();
  const auto wants = [&](const std::string& m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };

  ReplicateOutput out;
  std::optional<LinearPredictor> en;
  std::optional<NetworkModel> dnn;
  for (double theta : cfg.theta_grid) {
    const SemiSyntheticData data = generate(cfg, ctx.gen, theta, rep);
    // Setting-A data does not depend on theta, so these fits are shared.
    if (wants("elastic_net") && !en) {
      const auto& y = data.a.read_labels(LabelPurpose::training);
      en = LinearPredictor{fit_standardizer(data.a), {}};
      en->model = fit_elastic_net(en->standardizer.apply(data.a.features), y, ctx.en.lambda, ctx.en.ratio, 1e-7, 10000);
    }
    if (wants("dnn") && !dnn) dnn = fit_dnn(data.a, ctx.hyper, net_seed);
    std::optional<Dataset> revealed;
    if (wants("retrain") || wants("finetune")) revealed = reveal_window(data.b, cfg.reveal_window);

    const auto& y = data.b.read_labels(LabelPurpose::evaluation);
    const Matrix& xb = data.b.features;
    std::map<std::string, double> oracle_cost;
    std::vector<RawRecord> theta_records;
    for (const auto& method : methods) {
      std::vector<double> pred;
      if (method == "elastic_net") {
        pred = predict(*en, xb);
      } else if (method == "dnn") {
        pred = predict(*dnn, xb);
      } else if (method == "wdgrl") {
        pred = predict(fit_wdgrl(data.a, xb, ctx.hyper, cfg.wdgrl, net_seed), xb);
      } else if (method == "retrain") {
        pred = predict(fit_retrained(data.a, *revealed, ctx.hyper, net_seed), xb);
      } else if (method == "finetune") {
        pred = predict(fit_finetuned(data.a, *revealed, ctx.hyper, net_seed, cfg.finetune_epochs), xb);
      } else if (method == "oracle") {
        pred = y;
      } else if (auto a = sweep_value(method, "wdgrl_a")) {
        WdgrlParams p = cfg.wdgrl;
        p.alpha = *a;
        pred = predict(fit_wdgrl(data.a, xb, ctx.hyper, p, net_seed), xb);
      } else if (auto b = sweep_value(method, "wdgrl_b")) {
        WdgrlParams p = cfg.wdgrl;
        p.beta = *b;
        pred = predict(fit_wdgrl(data.a, xb, ctx.hyper, p, net_seed), xb);
      } else {
        throw ConfigError("unknown method: " + method);
      }
      for (auto& v : pred) v = std::max(0.0, v);
      const double mae = mean_absolute_error(pred, y);

      for (const auto& variant : cfg.variants) {
        const auto full = sched::make_instance(data.due_dates, pred, y, variant.capacity, variant.c_early,
                                               variant.c_tardy);
        const auto inst = sched::top_k_by_due_date(full, static_cast<std::size_t>(cfg.top_k));
        const auto res = sched::solve_branch_and_bound(inst, {cfg.node_cap});
        if (!res.feasible) {
          throw std::runtime_error("no feasible schedule for seed " + std::to_string(s) + ", theta " +
                                   full_precision(theta) + ", method " + method);
        }
        RawRecord r;
        r.variant = variant.name;
        r.seed_index = s;
        r.theta = theta;
        r.method = method;
        r.mae = mae;
        r.cost = sched::realized_cost(inst, res.schedule);
        r.optimal = res.optimal;
        if (method == "oracle") oracle_cost[variant.name] = r.cost;
        theta_records.push_back(std::move(r));
      }
    }
    for (const auto& r : theta_records) {
      const auto it = oracle_cost.find(r.variant);
      if (it != oracle_cost.end() && r.cost < it->second - 1e-9) ++out.oracle_violations;
    }
    out.records.insert(out.records.end(), theta_records.begin(), theta_records.end());
    const auto events = data.audit->events();
    out.audit.insert(out.audit.end(), events.begin(), events.end());
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;

  Dataset seed_a;
  Dataset seed_b;
  if (cfg.seed_csv_a) {
    seed_a = load_csv(*cfg.seed_csv_a, Setting::A);
    seed_b = load_csv(*cfg.seed_csv_b, Setting::B);
  } else {
    auto pops = builtin_seed_data(cfg.seed_rows_a, cfg.seed_rows_b, derive_seed(cfg.base_seed, 7));
    seed_a = std::move(pops.a);
    seed_b = std::move(pops.b);
  }
  const SemiSyntheticGenerator gen(seed_a, seed_b, cfg.phi, derive_seed(cfg.base_seed, 11), cfg.threads);

  Context ctx{cfg, gen, cfg.elastic_net, cfg.dnn};
  const auto methods = cfg.all_methods();
  const bool needs_network = std::any_of(methods.begin(), methods.end(), [](const std::string& m) {
    return m != "elastic_net" && m != "oracle";
  });
  const bool needs_en = std::find(methods.begin(), methods.end(), "elastic_net") != methods.end();
  if (cfg.tuning == TuningMode::grid && (needs_network || needs_en)) {
    const SemiSyntheticData first = generate(cfg, gen, cfg.theta_grid.front(), replicate_seed(cfg, 0));
    const std::uint64_t cv_seed = derive_seed(cfg.base_seed, 21);
    if (needs_en) {
      const auto cv = cross_validate(elastic_net_grid(), first.a, cfg.cv_folds, cv_seed, cfg.threads);
      ctx.en = cv.best_config();
      result.tuning.elastic_net_cv_mae = cv.mean_mae(cv.best);
    }
    if (needs_network) {
      const auto cv = cross_validate(dnn_grid(), first.a, cfg.cv_folds, cv_seed, cfg.threads);
      ctx.hyper = cv.best_config();
      result.tuning.dnn_cv_mae = cv.mean_mae(cv.best);
    }
    const auto events = first.audit->events();
    result.audit.insert(result.audit.end(), events.begin(), events.end());
  }
  result.tuning.elastic_net = ctx.en;
  result.tuning.dnn = ctx.hyper;

  std::vector<ReplicateOutput> outputs(static_cast<std::size_t>(cfg.seeds));
  parallel_for(outputs.size(), cfg.threads, [&](std::size_t s) {
    outputs[s] = run_replicate(ctx, static_cast<int>(s));
  });
  for (auto& o : outputs) {
    result.records.insert(result.records.end(), o.records.begin(), o.records.end());
    result.audit.insert(result.audit.end(), o.audit.begin(), o.audit.end());
    result.oracle_violations += o.oracle_violations;
  }
  result.table = aggregate(result.records);
  return result;
}

}  // namespace shiftsched::harness
