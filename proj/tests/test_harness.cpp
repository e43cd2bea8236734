#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "shiftsched/harness.hpp"

using namespace shiftsched;
using namespace shiftsched::harness;

namespace {

std::vector<RawRecord> sample_records() {
  std::vector<RawRecord> recs;
  const std::vector<std::string> methods{"elastic_net", "dnn", "wdgrl"};
  for (int s = 0; s < 3; ++s) {
    for (double theta : {1.0, 2.0}) {
      for (std::size_t m = 0; m < methods.size(); ++m) {
        RawRecord r;
        r.variant = "base";
        r.seed_index = s;
        r.theta = theta;
        r.method = methods[m];
        r.mae = 10.0 + 3.0 * static_cast<double>(m == 2 ? 0 : m + 1) * theta + 0.1 * s;
        r.cost = 100.0 * r.mae + s;
        r.optimal = s % 2 == 0;
        recs.push_back(r);
      }
    }
  }
  return recs;
}

std::size_t count_lines(const std::string& s, const std::string& prefix) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0 ? 1 : 0;
  return n;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.theta_grid = {0.0, 2.0};
  cfg.seeds = 2;
  cfg.scale = 0.03;
  cfg.top_k = 20;
  cfg.tuning = TuningMode::fixed;
  cfg.dnn.epochs = 2;
  cfg.dnn.extractor_width = 8;
  cfg.seed_rows_a = 600;
  cfg.seed_rows_b = 400;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing is strict") {
  CHECK(config_from_text("{}").seeds == ExperimentConfig{}.seeds);
  const auto cfg = config_from_text(R"({"seeds": 3, "theta_grid": [0, 4], "variants": [{"name": "k50", "capacity": 50}]})");
  CHECK(cfg.seeds == 3);
  CHECK(cfg.theta_grid == std::vector<double>{0.0, 4.0});
  REQUIRE(cfg.variants.size() == 1);
  CHECK(cfg.variants[0].capacity == 50);
  CHECK(cfg.variants[0].c_tardy == 1.0);

  CHECK_THROWS_AS(config_from_text(R"({"sedes": 3})"), ConfigError);
  CHECK_THROWS_AS(config_from_text(R"({"seeds": "three"})"), ConfigError);
  CHECK_THROWS_AS(config_from_text(R"({"seeds": 0})"), ConfigError);
  CHECK_THROWS_AS(config_from_text(R"({"methods": ["dnn", "dnn"]})"), ConfigError);
  CHECK_THROWS_AS(config_from_text(R"({"methods": ["forest"]})"), ConfigError);
  CHECK_THROWS_AS(config_from_text(R"({"variants": [{"name": "x", "capacity": 0}]})"), ConfigError);
  CHECK_THROWS_AS(config_from_text(R"({"tuning": {"mode": "random"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_text("{not json"), ConfigError);
}

TEST_CASE("config text round trip") {
  auto cfg = config_from_text(R"({"seeds": 4, "noise": "uniform", "phi": "boosting", "sensitivity": {"alpha": [0.5]}})");
  const auto back = config_from_text(config_to_text(cfg));
  CHECK(config_to_text(back) == config_to_text(cfg));
  CHECK(back.noise == NoiseKind::uniform);
  CHECK(back.all_methods().back() == "wdgrl_a0.5");
}

TEST_CASE("display rounding is half to even") {
  CHECK(round_display(0.25) == doctest::Approx(0.2));
  CHECK(round_display(0.35) == doctest::Approx(0.4));
  CHECK(round_display(23.75) == doctest::Approx(23.8));
  CHECK(round_display(-1.25) == doctest::Approx(-1.2));
  CHECK(round_display(3.04) == doctest::Approx(3.0));
}

TEST_CASE("full precision round trips") {
  for (double v : {0.1, 1.0 / 3.0, 2954.2, 1e-300, -7.5}) CHECK(std::stod(full_precision(v)) == v);
  CHECK(full_precision(0.5) == "0.5");
}

TEST_CASE("aggregation and Welch comparison") {
  const auto table = aggregate(sample_records());
  CHECK(table.methods == std::vector<std::string>{"elastic_net", "dnn", "wdgrl"});
  CHECK(table.thetas == std::vector<double>{1.0, 2.0});
  const auto& en = table.at("base", "elastic_net", 1.0);
  CHECK(en.replicates == 3);
  CHECK(en.mae_mean == doctest::Approx(13.1));
  CHECK(en.mae_sd == doctest::Approx(0.1));
  CHECK_FALSE(en.p_value.has_value());
  const auto& w = table.at("base", "wdgrl", 2.0);
  REQUIRE(w.p_value.has_value());
  CHECK(w.compared_to == "elastic_net");
  CHECK(*w.p_value < 1e-4);
  CHECK_THROWS((void)table.at("base", "oracle", 1.0));
}

TEST_CASE("report formats") {
  const auto table = aggregate(sample_records());
  const auto md = format_report(table, ReportFormat::markdown);
  CHECK(count_lines(md, "| ") == 1 + table.rows.size());
  CHECK(md.find("| wdgrl | 2 |") != std::string::npos);

  const auto csv = format_report(table, ReportFormat::csv);
  const auto rows = parse_report_csv(csv);
  REQUIRE(rows.size() == table.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].mae_mean == table.rows[i].mae_mean);
    CHECK(rows[i].cost_sd == table.rows[i].cost_sd);
    CHECK(rows[i].p_value.has_value() == table.rows[i].p_value.has_value());
  }

  const auto json = nlohmann::json::parse(format_report(table, ReportFormat::json));
  CHECK(json.at("rows").size() == table.rows.size());
  CHECK(parse_report_format("md") == ReportFormat::markdown);
  CHECK_THROWS(parse_report_format("xml"));
}

TEST_CASE("raw csv round trip") {
  const auto recs = sample_records();
  const auto back = parse_raw_csv(raw_csv(recs));
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].method == recs[i].method);
    CHECK(back[i].mae == recs[i].mae);
    CHECK(back[i].cost == recs[i].cost);
    CHECK(back[i].optimal == recs[i].optimal);
  }
  CHECK(raw_csv(back) == raw_csv(recs));
  CHECK_THROWS(parse_raw_csv("variant,seed\nbase,1\n"));
}

TEST_CASE("oracle-only experiment") {
  auto cfg = tiny_config();
  cfg.methods = {"oracle"};
  const auto result = run_experiment(cfg);
  CHECK(result.records.size() == 2 * 2);
  for (const auto& r : result.records) CHECK(r.mae == 0.0);
  CHECK(result.oracle_violations == 0);
}

TEST_CASE("small experiment is deterministic and keeps setting-B labels sealed") {
  auto cfg = tiny_config();
  cfg.methods = {"elastic_net", "dnn", "wdgrl", "oracle", "retrain", "finetune"};
  cfg.variants.push_back({"tardy2", 70, 1.0, 2.0});
  const auto r1 = run_experiment(cfg);
  const auto r2 = run_experiment(cfg);
  CHECK(raw_csv(r1.records) == raw_csv(r2.records));
  CHECK(r1.records.size() == 2 * 2 * 6 * 2);

  for (const auto& e : r1.audit) {
    if (e.setting != Setting::B) continue;
    CHECK(e.what != "labels:training");
    CHECK(e.what != "labels:tuning");
    CHECK(e.what != "standardizer_fit");
  }
  const auto b_eval = std::count_if(r1.audit.begin(), r1.audit.end(), [](const AuditEvent& e) {
    return e.setting == Setting::B && e.what == "labels:evaluation";
  });
  CHECK(b_eval > 0);

  cfg.threads = 2;
  CHECK(raw_csv(run_experiment(cfg).records) == raw_csv(r1.records));
}
