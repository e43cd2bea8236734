// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "shiftsched/datagen.hpp"
#include "shiftsched/diagnostics.hpp"
#include "shiftsched/harness.hpp"
#include "shiftsched/predictors.hpp"
#include "shiftsched/scheduler.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace shiftsched;

namespace {

// Pinned tolerances and limits.
constexpr double kGradientTolerance = 1e-4;
constexpr double kGradientSeconds = 30.0;
constexpr double kWassersteinTolerance = 0.15;
constexpr double kCriticBeta = 10.0;
constexpr double kWassersteinSeconds = 120.0;
constexpr double kSolverSeconds = 60.0;
constexpr double kLemmaSeconds = 120.0;
constexpr double kLinearTolerance = 1e-6;
constexpr double kNullAucLow = 0.45;
constexpr double kNullAucHigh = 0.55;
constexpr double kShiftedAucMin = 0.95;
constexpr double kDiagnosticsSeconds = 180.0;
constexpr double kMaeImprovementAtFour = 0.10;
constexpr double kWelchAlpha = 0.05;
constexpr double kFlatness = 0.15;
constexpr double kTrendSeconds = 30.0 * 60.0;
constexpr int kVariantSeedsRequired = 4;
constexpr double kVariantSeconds = 2.0 * 3600.0;

constexpr const char* kAcceptanceConfig = R"({
  "theta_grid": [1, 2, 3, 4],
  "seeds": 5,
  "base_seed": 1,
  "methods": ["elastic_net", "dnn", "wdgrl", "oracle", "retrain", "finetune"],
  "variants": [
    {"name": "base", "capacity": 70, "c_early": 1, "c_tardy": 1},
    {"name": "k50", "capacity": 50, "c_early": 1, "c_tardy": 1},
    {"name": "tardy2", "capacity": 70, "c_early": 1, "c_tardy": 2}
  ],
  "scale": 0.25,
  "tuning": {"mode": "grid"},
  "sensitivity": {"alpha": [0.8, 0.9, 1.0, 1.1, 1.2], "beta": [0.8, 0.9, 1.0, 1.1, 1.2]},
  "reveal": {"window_days": 30, "finetune_epochs": 10}
})";

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// Criterion 1.
Outcome gradient_exactness() {
  double worst = 0.0;
  int skipped = 0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(derive_seed(2024, trial));
    const auto m = testing::random_mlp(rng, 3, 64);
    const Matrix x = testing::random_matrix(rng, 4, m.input_dim());
    const Matrix r = testing::random_matrix(rng, 4, m.output_dim());
    const auto g = nn::backward(m, nn::forward(m, x), r);
    const auto loss = [&](const nn::Mlp& mm, const Matrix& xx) {
      double l2 = 0.0;
      for (const auto& layer : mm.layers()) l2 += layer.spec.l2_strength * layer.weights.squaredNorm();
      return (nn::predict(mm, xx).array() * r.array()).sum() + l2;
    };
    worst = std::max(worst, testing::max_gradient_error(m, g, x, loss, true, 1e-5, &skipped));
  }
  return {worst < kGradientTolerance,
          "max relative error " + fmt(worst) + ", kink-adjacent coordinates skipped " + std::to_string(skipped)};
}

// Criterion 2.
Outcome critic_soundness() {
  bool ok = true;
  std::string detail;
  for (double delta : {1.0, 2.0}) {
    Rng rng(derive_seed(77, static_cast<std::uint64_t>(delta)));
    const Matrix za = testing::random_matrix(rng, 5000, 1);
    const Matrix zb = testing::random_matrix(rng, 5000, 1).array() + delta;
    CriticTraining cfg;
    cfg.beta = kCriticBeta;
    cfg.seed = 5;
    // The critic maximizes E_first f - E_second f, so the shifted sample goes first.
    const double est = estimate_wasserstein(zb, za, cfg).value;
    const double rel = std::abs(est - delta) / delta;
    ok = ok && rel <= kWassersteinTolerance;
    detail += "delta " + fmt(delta) + " -> " + fmt(est) + " (" + fmt(100 * rel, 3) + "%) ";
  }
  return {ok, detail + "beta " + fmt(kCriticBeta)};
}

sched::SchedulingInstance random_tiny_instance(Rng& rng, int max_m, int max_t) {
  std::uniform_int_distribution<int> m_dist(1, max_m);
  std::uniform_int_distribution<int> t_dist(3, max_t);
  std::uniform_int_distribution<int> k_dist(1, 2);
  std::uniform_real_distribution<double> dur(0.0, 2.5);
  sched::SchedulingInstance inst;
  const int m = m_dist(rng);
  inst.horizon = t_dist(rng);
  std::uniform_int_distribution<int> due(1, inst.horizon);
  for (int i = 0; i < m; ++i) inst.orders.push_back({i, due(rng), dur(rng), dur(rng)});
  for (int t = 0; t < inst.horizon; ++t) inst.capacity.push_back(k_dist(rng));
  return inst;
}

// Criterion 3.
Outcome solver_exactness() {
  Rng rng(31);
  int agree = 0;
  int infeasible = 0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = random_tiny_instance(rng, 6, 8);
    const auto bf = sched::solve_bruteforce(inst);
    const auto bb = sched::solve_branch_and_bound(inst);
    if (!bf.feasible) {
      ++infeasible;
      agree += bb.feasible ? 0 : 1;
      continue;
    }
    if (bb.feasible && bb.optimal && std::abs(bb.objective - bf.objective) <= 1e-9 * std::max(1.0, bf.objective)) ++agree;
  }
  return {agree == 200, std::to_string(agree) + "/200 agree (" + std::to_string(infeasible) + " infeasible)"};
}

// Criterion 4.
Outcome lemma_property() {
  Rng rng(41);
  int violations = 0;
  int comparisons = 0;
  int instances = 0;
  while (instances < 100) {
    auto inst = random_tiny_instance(rng, 5, 7);
    std::vector<double> footprint;
    for (const auto& o : inst.orders) footprint.push_back(*o.realized);
    inst.footprint = footprint;
    const auto oracle = sched::oracle_schedule(inst);
    if (!oracle.feasible) continue;
    ++instances;
    const double best = sched::realized_cost(inst, oracle.schedule);
    std::normal_distribution<double> noise(0.0, 1.5);
    for (int p = 0; p < 20; ++p) {
      auto perturbed = inst;
      for (auto& o : perturbed.orders) o.predicted = std::max(0.0, *o.realized + noise(rng));
      const auto r = sched::solve_branch_and_bound(perturbed);
      ++comparisons;
      if (!r.feasible || sched::realized_cost(inst, r.schedule) < best - 1e-9) ++violations;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(comparisons) + " comparisons"};
}

// Criterion 5.
Outcome linear_oracles() {
  double worst_ridge = 0.0;
  double worst_ols = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(55, trial));
    const Eigen::Index n = 30 + static_cast<Eigen::Index>(trial);
    const int d = 2 + static_cast<int>(trial % 5);
    const Matrix X = testing::random_matrix(rng, n, d);
    const Vector beta = testing::random_matrix(rng, d, 1).col(0);
    const Vector noise = testing::random_matrix(rng, n, 1).col(0);
    const Vector yv = (X * beta + 0.3 * noise).array() + 5.0;
    const std::vector<double> y(yv.data(), yv.data() + n);
    const auto nd = static_cast<double>(n);

    const Vector xbar = X.colwise().mean().transpose();
    const Matrix Xc = X.rowwise() - xbar.transpose();
    const Vector yc = yv.array() - yv.mean();
    const double lambda = 0.1 * static_cast<double>(trial % 4 + 1);
    const Matrix lhs = Xc.transpose() * Xc / nd + lambda * Matrix::Identity(d, d);
    const Vector b_ridge = lhs.ldlt().solve(Xc.transpose() * yc / nd);
    const auto ridge = fit_elastic_net(X, y, lambda, 0.0);
    worst_ridge = std::max({worst_ridge, (ridge.coefficients - b_ridge).cwiseAbs().maxCoeff(),
                            std::abs(ridge.intercept - (yv.mean() - xbar.dot(b_ridge)))});

    Matrix design(n, d + 1);
    design << X, Matrix::Ones(n, 1);
    const Vector sol = design.colPivHouseholderQr().solve(yv);
    const auto ols = fit_elastic_net(X, y, 0.0, 0.5);
    worst_ols = std::max({worst_ols, (ols.coefficients - sol.head(d)).cwiseAbs().maxCoeff(),
                          std::abs(ols.intercept - sol(d))});
  }
  return {worst_ridge < kLinearTolerance && worst_ols < kLinearTolerance,
          "max |diff| ridge " + fmt(worst_ridge) + ", least squares " + fmt(worst_ols)};
}

// Criterion 6.
Outcome shift_diagnostics() {
  const std::uint64_t base = 1;
  const auto seeds = builtin_seed_data(5830, 3866, derive_seed(base, 7));
  const SemiSyntheticGenerator gen(seeds.a, seeds.b, PhiKind::forest, derive_seed(base, 11));
  SemiSyntheticConfig cfg;
  cfg.n = 1458;
  cfg.m = 967;
  cfg.seed = derive_seed(base, 1000);
  diag::AdversarialParams p;
  p.seed = 3;
  cfg.theta = 0.0;
  const auto d0 = gen.generate(cfg);
  const double auc0 = diag::adversarial_validation(d0.a.features, d0.b.features, p).roc_auc;
  cfg.theta = 4.0;
  const auto d4 = gen.generate(cfg);
  const double auc4 = diag::adversarial_validation(d4.a.features, d4.b.features, p).roc_auc;
  return {auc0 >= kNullAucLow && auc0 <= kNullAucHigh && auc4 > kShiftedAucMin,
          "AUC theta=0 " + fmt(auc0) + ", theta=4 " + fmt(auc4)};
}

// Per (variant, method, theta) replicate values, ordered by seed.
struct Cells {
  std::map<std::tuple<std::string, std::string, double>, std::vector<const harness::RawRecord*>> by_key;

  explicit Cells(const std::vector<harness::RawRecord>& recs) {
    for (const auto& r : recs) by_key[{r.variant, r.method, r.theta}].push_back(&r);
    for (auto& [k, v] : by_key) {
      std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->seed_index < b->seed_index; });
    }
  }
  [[nodiscard]] const std::vector<const harness::RawRecord*>& get(const std::string& variant, const std::string& method,
                                                                  double theta) const {
    return by_key.at({variant, method, theta});
  }
};

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

struct MainRun {
  harness::ExperimentResult result;
  double seconds = 0.0;
  std::string raw;
};

harness::ExperimentResult run_logged(const harness::ExperimentConfig& cfg, const fs::path& dir, const std::string& tag,
                                     double* seconds) {
  const auto start = Clock::now();
  auto result = harness::run_experiment(cfg);
  *seconds = seconds_since(start);
  fs::create_directories(dir);
  std::ofstream(dir / (tag + "_raw.csv")) << harness::raw_csv(result.records);
  harness::emit_report(result.table, harness::ReportFormat::markdown, dir / (tag + "_report.md"));
  return result;
}

// Criterion 7.
Outcome trend_reproduction(const MainRun& run) {
  const auto& t = run.result.table;
  const auto mean_of = [&](const std::string& m, double theta, bool cost) {
    const auto& row = t.at("base", m, theta);
    return cost ? row.cost_mean : row.mae_mean;
  };
  const std::vector<double> thetas = t.thetas;
  std::ostringstream d;
  bool a_ok = true;
  for (double th : thetas) a_ok = a_ok && mean_of("wdgrl", th, false) <= mean_of("dnn", th, false);
  const double improvement = 1.0 - mean_of("wdgrl", 4.0, false) / mean_of("dnn", 4.0, false);
  a_ok = a_ok && improvement >= kMaeImprovementAtFour;
  d << "a:" << (a_ok ? "ok" : "FAIL") << " (MAE gain at 4 " << fmt(100 * improvement, 3) << "%)";

  bool b_ok = true;
  d << "; b:";
  for (double th : {3.0, 4.0}) {
    const auto& w = t.at("base", "wdgrl", th);
    const bool ok = w.cost_mean <= mean_of("dnn", th, true) && w.cost_mean <= mean_of("elastic_net", th, true) &&
                    w.p_value.has_value() && *w.p_value < kWelchAlpha;
    b_ok = b_ok && ok;
    d << " theta " << fmt(th) << " p=" << (w.p_value ? fmt(*w.p_value, 3) : "na") << (ok ? "" : " FAIL");
  }

  bool c_ok = true;
  d << "; c:";
  for (const std::string m : {"dnn", "elastic_net"}) {
    for (bool cost : {false, true}) {
      std::vector<double> v;
      for (double th : thetas) v.push_back(mean_of(m, th, cost));
      const double rho = spearman(thetas, v);
      c_ok = c_ok && rho > 0.0;
      d << ' ' << m << (cost ? " cost" : " MAE") << " rho=" << fmt(rho, 3);
    }
  }
  std::vector<double> w;
  for (double th : thetas) w.push_back(mean_of("wdgrl", th, false));
  const double spread = (*std::max_element(w.begin(), w.end()) - *std::min_element(w.begin(), w.end())) /
                        *std::min_element(w.begin(), w.end());
  c_ok = c_ok && spread < kFlatness;
  d << " wdgrl MAE spread " << fmt(100 * spread, 3) << "%";
  const bool time_ok = run.seconds < kTrendSeconds;
  d << "; runtime " << fmt(run.seconds, 4) << "s";
  return {a_ok && b_ok && c_ok && time_ok, d.str()};
}

int seeds_with_ordering(const Cells& cells, const std::string& variant) {
  const auto& w = cells.get(variant, "wdgrl", 4.0);
  const auto& dnn = cells.get(variant, "dnn", 4.0);
  const auto& en = cells.get(variant, "elastic_net", 4.0);
  int ok = 0;
  for (std::size_t s = 0; s < w.size(); ++s) ok += w[s]->cost <= dnn[s]->cost && w[s]->cost <= en[s]->cost ? 1 : 0;
  return ok;
}

// Criterion 8.
Outcome variant_robustness(const MainRun& main, const harness::ExperimentConfig& base_cfg, const fs::path& dir) {
  double seconds = 0.0;
  std::ostringstream d;
  bool ok = true;
  const auto check = [&](const std::string& label, const std::vector<harness::RawRecord>& recs,
                         const std::string& variant) {
    const int n = seeds_with_ordering(Cells(recs), variant);
    ok = ok && n >= kVariantSeedsRequired;
    d << label << ' ' << n << "/5 ";
  };

  auto cfg = base_cfg;
  cfg.methods = {"elastic_net", "dnn", "wdgrl"};
  cfg.alpha_sweep.clear();
  cfg.beta_sweep.clear();
  cfg.variants = {harness::ScheduleVariant{}};
  cfg.theta_grid = {3.0, 4.0};

  double s = 0.0;
  cfg.noise = NoiseKind::uniform;
  const auto uniform = run_logged(cfg, dir, "uniform", &s);
  seconds += s;
  check("uniform", uniform.records, "base");

  cfg.noise = NoiseKind::gaussian;
  cfg.phi = PhiKind::boosting;
  const auto boosting = run_logged(cfg, dir, "boosting", &s);
  seconds += s;
  check("boosting", boosting.records, "base");

  check("K=50", main.result.records, "k50");
  check("c_tardy=2", main.result.records, "tardy2");
  ok = ok && seconds < kVariantSeconds;
  d << "runtime " << fmt(seconds, 4) << "s";
  return {ok, d.str()};
}

// Criterion 9.
Outcome reveal_baselines(const MainRun& run) {
  const auto& t = run.result.table;
  bool ok = true;
  std::ostringstream d;
  for (double th : t.thetas) {
    const double w = t.at("base", "wdgrl", th).mae_mean;
    const double r = t.at("base", "retrain", th).mae_mean;
    const double f = t.at("base", "finetune", th).mae_mean;
    ok = ok && r > w && f > w;
    d << "theta " << fmt(th) << ": wdgrl " << fmt(w, 3) << " retrain " << fmt(r, 3) << " finetune " << fmt(f, 3)
      << "; ";
  }
  return {ok, d.str()};
}

// Criterion 10.
Outcome sensitivity(const MainRun& run, const harness::ExperimentConfig& cfg) {
  const auto& t = run.result.table;
  const double dnn = t.at("base", "dnn", 4.0).cost_mean;
  bool ok = true;
  std::ostringstream d;
  d << "dnn cost " << fmt(dnn, 5) << ";";
  for (const auto& m : cfg.all_methods()) {
    if (m.rfind("wdgrl_", 0) != 0) continue;
    const double c = t.at("base", m, 4.0).cost_mean;
    ok = ok && c < dnn;
    d << ' ' << m << '=' << fmt(c, 5);
  }
  return {ok, d.str()};
}

// Criterion 11.
Outcome determinism(const MainRun& run, const harness::ExperimentConfig& cfg, const fs::path& dir) {
  double s = 0.0;
  const auto again = run_logged(cfg, dir, "acceptance_repeat", &s);
  const std::string raw = harness::raw_csv(again.records);
  return {raw == run.raw, std::to_string(run.raw.size()) + " bytes, " + (raw == run.raw ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> only;
  std::string out_dir = "acceptance_out";
  app.add_option("--only", only, "Run only these criteria (1-11)")->delimiter(',');
  app.add_option("--out", out_dir, "Directory for experiment artifacts")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  const auto wanted = [&](int c) { return selected.empty() || selected.contains(c); };

  int failures = 0;
  const auto report = [&](int id, const std::string& name, const std::function<Outcome()>& body) {
    if (!wanted(id)) return;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << std::setw(2) << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << name << ": "
              << o.detail << " [" << fmt(seconds_since(start), 4) << "s]" << std::endl;
  };

  report(1, "gradient exactness", [] {
    const auto start = Clock::now();
    auto o = gradient_exactness();
    o.pass = o.pass && seconds_since(start) < kGradientSeconds;
    return o;
  });
  report(2, "critic Wasserstein soundness", [] {
    const auto start = Clock::now();
    auto o = critic_soundness();
    o.pass = o.pass && seconds_since(start) < kWassersteinSeconds;
    return o;
  });
  report(3, "solver exactness", [] {
    const auto start = Clock::now();
    auto o = solver_exactness();
    o.pass = o.pass && seconds_since(start) < kSolverSeconds;
    return o;
  });
  report(4, "oracle dominance under a shared footprint", [] {
    const auto start = Clock::now();
    auto o = lemma_property();
    o.pass = o.pass && seconds_since(start) < kLemmaSeconds;
    return o;
  });
  report(5, "elastic-net oracle equivalence", linear_oracles);
  report(6, "shift diagnostics", [] {
    const auto start = Clock::now();
    auto o = shift_diagnostics();
    o.pass = o.pass && seconds_since(start) < kDiagnosticsSeconds;
    return o;
  });

  const bool need_main = wanted(7) || wanted(8) || wanted(9) || wanted(10) || wanted(11);
  if (need_main) {
    const fs::path dir(out_dir);
    const auto cfg = harness::config_from_text(kAcceptanceConfig);
    MainRun run;
    std::string error;
    try {
      run.result = run_logged(cfg, dir, "acceptance", &run.seconds);
      run.raw = harness::raw_csv(run.result.records);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const auto guarded = [&](const std::function<Outcome()>& body) {
      return [&, body] { return error.empty() ? body() : Outcome{false, "experiment failed: " + error}; };
    };
    report(7, "trend reproduction", guarded([&] { return trend_reproduction(run); }));
    report(8, "variant robustness", guarded([&] { return variant_robustness(run, cfg, dir); }));
    report(9, "reveal-window baselines", guarded([&] { return reveal_baselines(run); }));
    report(10, "alpha/beta sensitivity", guarded([&] { return sensitivity(run, cfg); }));
    report(11, "end-to-end determinism", guarded([&] { return determinism(run, cfg, dir); }));
  }
  std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
