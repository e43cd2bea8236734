#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shiftsched/datagen.hpp"
#include "shiftsched/predictors.hpp"
#include "shiftsched/scheduler.hpp"

namespace shiftsched::harness {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Capacity and cost rates used for stage 2; predictions are shared across variants.
struct ScheduleVariant {
  std::string name = "base";
  int capacity = 70;
  double c_early = 1.0;
  double c_tardy = 1.0;
};

enum class TuningMode { grid, fixed };

struct ExperimentConfig {
  std::vector<double> theta_grid{1.0, 2.0, 3.0, 4.0};
  int seeds = 10;
  std::uint64_t base_seed = 1;
  std::vector<std::string> methods{"elastic_net", "dnn", "wdgrl", "oracle"};
  std::vector<ScheduleVariant> variants{ScheduleVariant{}};
  NoiseKind noise = NoiseKind::gaussian;
  PhiKind phi = PhiKind::forest;
  double scale = 0.25;
  int top_k = 100;
  double slack_sigma = 5.0;
  int horizon_spread = 60;
  std::int64_t node_cap = 20000;

  TuningMode tuning = TuningMode::grid;
  int cv_folds = 5;
  DnnHyper dnn;                    // used when tuning is fixed
  ElasticNetConfig elastic_net;    // used when tuning is fixed
  WdgrlParams wdgrl;
  std::vector<double> alpha_sweep;  // adds methods "wdgrl_a<value>"
  std::vector<double> beta_sweep;   // adds methods "wdgrl_b<value>"
  double reveal_window = 30.0;
  int finetune_epochs = 10;

  Eigen::Index seed_rows_a = 5830;
  Eigen::Index seed_rows_b = 3866;
  std::optional<std::filesystem::path> seed_csv_a;
  std::optional<std::filesystem::path> seed_csv_b;
  int threads = 1;

  void validate() const;
  /// Configured methods followed by the sweep entries.
  [[nodiscard]] std::vector<std::string> all_methods() const;
  [[nodiscard]] Eigen::Index rows_a() const;
  [[nodiscard]] Eigen::Index rows_b() const;
};

const std::vector<std::string>& known_methods();

ExperimentConfig config_from_text(const std::string& text);
std::string config_to_text(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RawRecord {
  std::string variant;
  int seed_index = 0;
  double theta = 0.0;
  std::string method;
  double mae = 0.0;
  double cost = 0.0;
  bool optimal = false;
};

struct ReportRow {
  std::string variant;
  std::string method;
  double theta = 0.0;
  int replicates = 0;
  double mae_mean = 0.0;
  double mae_sd = 0.0;   // 0 with a single replicate
  double cost_mean = 0.0;
  double cost_sd = 0.0;
  std::optional<double> p_value;  // WDGRL-family rows vs the better baseline
  std::string compared_to;
};

struct ReportTable {
  std::vector<std::string> variants;
  std::vector<std::string> methods;
  std::vector<double> thetas;
  std::vector<ReportRow> rows;  // variant-major, then method, then theta

  [[nodiscard]] const ReportRow& at(const std::string& variant, const std::string& method, double theta) const;
};

struct TuningSummary {
  ElasticNetConfig elastic_net;
  DnnHyper dnn;
  double elastic_net_cv_mae = 0.0;
  double dnn_cv_mae = 0.0;
};

struct ExperimentResult {
  ReportTable table;
  std::vector<RawRecord> records;
  TuningSummary tuning;
  std::vector<AuditEvent> audit;  // label reads and standardizer fits across replicates
  int oracle_violations = 0;      // records whose cost is below the same replicate's oracle
};

/// Aggregates raw records: mean/sd per (variant, method, theta) and Welch
/// p-values of every WDGRL-family method against the baseline (elastic net or
/// DNN) with the lower mean cost in that cell.
ReportTable aggregate(const std::vector<RawRecord>& records);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Reports.
enum class ReportFormat { csv, json, markdown };

ReportFormat parse_report_format(const std::string& s);
std::string format_report(const ReportTable& table, ReportFormat format);
void emit_report(const ReportTable& table, ReportFormat format, const std::filesystem::path& path);

std::string raw_csv(const std::vector<RawRecord>& records);
std::vector<RawRecord> parse_raw_csv(const std::string& text);
std::vector<ReportRow> parse_report_csv(const std::string& text);

/// Round half to even at one decimal, as displayed in markdown tables.
double round_display(double v);
/// Shortest decimal string that parses back to exactly `v`.
std::string full_precision(double v);

}  // namespace shiftsched::harness
