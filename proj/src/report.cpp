#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "shiftsched/diagnostics.hpp"
#include "shiftsched/harness.hpp"

namespace shiftsched::harness {

std::string full_precision(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double round_display(double v) { return std::nearbyint(v * 10.0) / 10.0; }

namespace {

double parse_number(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw std::runtime_error("not a number: '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

bool is_wdgrl_family(const std::string& method) { return method.rfind("wdgrl", 0) == 0; }

std::string display(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", round_display(v));
  return buf;
}

std::string display_p(const std::optional<double>& p) {
  if (!p) return "";
  if (*p < 0.001) return "<0.001";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", *p);
  return buf;
}

template <typename T>
void append_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

const ReportRow& ReportTable::at(const std::string& variant, const std::string& method, double theta) const {
  for (const auto& r : rows) {
    if (r.variant == variant && r.method == method && r.theta == theta) return r;
  }
  throw std::out_of_range("no report row for " + variant + "/" + method + "/" + full_precision(theta));
}

ReportTable aggregate(const std::vector<RawRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records to aggregate");
  ReportTable table;
  for (const auto& r : records) {
    append_unique(table.variants, r.variant);
    append_unique(table.methods, r.method);
    append_unique(table.thetas, r.theta);
  }
  std::sort(table.thetas.begin(), table.thetas.end());

  using Key = std::tuple<std::string, std::string, double>;
  std::map<Key, std::vector<const RawRecord*>> cells;
  for (const auto& r : records) cells[{r.variant, r.method, r.theta}].push_back(&r);
  for (auto& [key, recs] : cells) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const RawRecord* a, const RawRecord* b) { return a->seed_index < b->seed_index; });
  }
  const auto costs_of = [&](const Key& k) {
    std::vector<double> c;
    for (const auto* r : cells.at(k)) c.push_back(r->cost);
    return c;
  };

  for (const auto& variant : table.variants) {
    for (const auto& method : table.methods) {
      for (double theta : table.thetas) {
        const Key key{variant, method, theta};
        const auto it = cells.find(key);
        if (it == cells.end()) continue;
        ReportRow row;
        row.variant = variant;
        row.method = method;
        row.theta = theta;
        row.replicates = static_cast<int>(it->second.size());
        std::vector<double> mae;
        std::vector<double> cost;
        for (const auto* r : it->second) {
          mae.push_back(r->mae);
          cost.push_back(r->cost);
        }
        std::tie(row.mae_mean, row.mae_sd) = mean_sd(mae);
        std::tie(row.cost_mean, row.cost_sd) = mean_sd(cost);
        if (is_wdgrl_family(method)) {
          std::optional<std::string> best;
          double best_cost = 0.0;
          for (const char* baseline : {"elastic_net", "dnn"}) {
            const Key bk{variant, baseline, theta};
            if (!cells.contains(bk)) continue;
            const auto [m, s] = mean_sd(costs_of(bk));
            if (!best || m < best_cost) {
              best = baseline;
              best_cost = m;
            }
          }
          if (best) {
            row.compared_to = *best;
            const auto other = costs_of({variant, *best, theta});
            if (cost.size() >= 2 && other.size() >= 2) {
              try {
                row.p_value = diag::welch_t_test(cost, other).p_value;
              } catch (const diag::DegenerateVarianceError&) {
                row.p_value = std::nullopt;
              }
            }
          }
        }
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw std::invalid_argument("unknown report format: " + s);
}

std::string format_report(const ReportTable& table, ReportFormat format) {
  if (table.rows.empty() || table.methods.empty()) throw std::invalid_argument("report has no methods");
  std::ostringstream out;
  switch (format) {
    case ReportFormat::csv: {
      out << "method,theta,mae_mean,mae_sd,cost_mean,cost_sd,p_value,variant,replicates,compared_to\n";
      for (const auto& r : table.rows) {
        out << r.method << ',' << full_precision(r.theta) << ',' << full_precision(r.mae_mean) << ','
            << full_precision(r.mae_sd) << ',' << full_precision(r.cost_mean) << ',' << full_precision(r.cost_sd)
            << ',' << (r.p_value ? full_precision(*r.p_value) : "") << ',' << r.variant << ',' << r.replicates << ','
            << r.compared_to << '\n';
      }
      break;
    }
    case ReportFormat::json: {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : table.rows) {
        nlohmann::json j{{"method", r.method},       {"theta", r.theta},         {"mae_mean", r.mae_mean},
                         {"mae_sd", r.mae_sd},       {"cost_mean", r.cost_mean}, {"cost_sd", r.cost_sd},
                         {"variant", r.variant},     {"replicates", r.replicates}};
        j["p_value"] = r.p_value ? nlohmann::json(*r.p_value) : nlohmann::json(nullptr);
        if (!r.compared_to.empty()) j["compared_to"] = r.compared_to;
        rows.push_back(j);
      }
      out << nlohmann::json{{"format", "shiftsched.report"}, {"rows", rows}}.dump(1) << '\n';
      break;
    }
    case ReportFormat::markdown: {
      bool first = true;
      for (const auto& variant : table.variants) {
        if (!first) out << '\n';
        first = false;
        out << "### " << variant << "\n\n";
        out << "| method | theta | MAE | MAE sd | cost | cost sd | p |\n";
        out << "|---|---|---|---|---|---|---|\n";
        for (const auto& r : table.rows) {
          if (r.variant != variant) continue;
          out << "| " << r.method << " | " << full_precision(r.theta) << " | " << display(r.mae_mean) << " | "
              << display(r.mae_sd) << " | " << display(r.cost_mean) << " | " << display(r.cost_sd) << " | "
              << display_p(r.p_value) << " |\n";
        }
      }
      break;
    }
  }
  return out.str();
}

void emit_report(const ReportTable& table, ReportFormat format, const std::filesystem::path& path) {
  const std::string text = format_report(table, format);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string raw_csv(const std::vector<RawRecord>& records) {
  std::ostringstream out;
  out << "variant,seed,theta,method,mae,cost,optimal\n";
  for (const auto& r : records) {
    out << r.variant << ',' << r.seed_index << ',' << full_precision(r.theta) << ',' << r.method << ','
        << full_precision(r.mae) << ',' << full_precision(r.cost) << ',' << (r.optimal ? 1 : 0) << '\n';
  }
  return out.str();
}

std::vector<RawRecord> parse_raw_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("raw CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "variant,seed,theta,method,mae,cost,optimal") throw std::runtime_error("unexpected raw CSV header");
  std::vector<RawRecord> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto c = split(line);
    if (c.size() != 7) throw std::runtime_error("raw CSV row has " + std::to_string(c.size()) + " cells");
    RawRecord r;
    r.variant = c[0];
    r.seed_index = static_cast<int>(parse_number(c[1]));
    r.theta = parse_number(c[2]);
    r.method = c[3];
    r.mae = parse_number(c[4]);
    r.cost = parse_number(c[5]);
    r.optimal = c[6] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("report CSV is empty");
  std::vector<ReportRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 10) throw std::runtime_error("report CSV row has " + std::to_string(c.size()) + " cells");
    ReportRow r;
    r.method = c[0];
    r.theta = parse_number(c[1]);
    r.mae_mean = parse_number(c[2]);
    r.mae_sd = parse_number(c[3]);
    r.cost_mean = parse_number(c[4]);
    r.cost_sd = parse_number(c[5]);
    if (!c[6].empty()) r.p_value = parse_number(c[6]);
    r.variant = c[7];
    r.replicates = static_cast<int>(parse_number(c[8]));
    r.compared_to = c[9];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace shiftsched::harness
