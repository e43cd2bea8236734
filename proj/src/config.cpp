#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shiftsched/harness.hpp"

namespace shiftsched::harness {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json hyper_json(const DnnHyper& h) {
  return {{"extractor_width", h.extractor_width}, {"regressor_width", h.regressor_width}, {"epochs", h.epochs},
          {"batch_size", h.batch_size},           {"l2", h.l2},                           {"dropout", h.dropout},
          {"learning_rate", h.learning_rate}};
}

DnnHyper hyper_from(const json& j) {
  reject_unknown(j, {"extractor_width", "regressor_width", "epochs", "batch_size", "l2", "dropout", "learning_rate"},
                 "tuning.dnn");
  DnnHyper h;
  read(j, "extractor_width", h.extractor_width);
  read(j, "regressor_width", h.regressor_width);
  read(j, "epochs", h.epochs);
  read(j, "batch_size", h.batch_size);
  read(j, "l2", h.l2);
  read(j, "dropout", h.dropout);
  read(j, "learning_rate", h.learning_rate);
  return h;
}

}  // namespace

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names{"elastic_net", "dnn", "wdgrl", "retrain", "finetune", "oracle"};
  return names;
}

void ExperimentConfig::validate() const {
  if (theta_grid.empty()) throw ConfigError("theta_grid must be nonempty");
  for (double t : theta_grid) {
    if (!(t >= 0.0)) throw ConfigError("theta values must be nonnegative");
  }
  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  if (methods.empty() && alpha_sweep.empty() && beta_sweep.empty()) throw ConfigError("methods must be nonempty");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw ConfigError("unknown method: " + m);
    }
    if (!seen.insert(m).second) throw ConfigError("duplicate method: " + m);
  }
  if (variants.empty()) throw ConfigError("at least one schedule variant is required");
  std::set<std::string> vnames;
  for (const auto& v : variants) {
    if (v.capacity < 1) throw ConfigError("variant capacity must be >= 1");
    if (!(v.c_early >= 0.0) || !(v.c_tardy >= 0.0)) throw ConfigError("variant costs must be nonnegative");
    if (v.name.empty() || v.name.find(',') != std::string::npos) throw ConfigError("invalid variant name");
    if (!vnames.insert(v.name).second) throw ConfigError("duplicate variant name: " + v.name);
  }
  if (!(scale > 0.0)) throw ConfigError("scale must be positive");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (node_cap < 1) throw ConfigError("node_cap must be >= 1");
  if (cv_folds < 2) throw ConfigError("cv folds must be >= 2");
  if (wdgrl.alpha < 0.0 || wdgrl.beta < 0.0 || wdgrl.n_critic < 1) throw ConfigError("invalid wdgrl parameters");
  for (double a : alpha_sweep) {
    if (!(a >= 0.0)) throw ConfigError("alpha sweep values must be nonnegative");
  }
  for (double b : beta_sweep) {
    if (!(b >= 0.0)) throw ConfigError("beta sweep values must be nonnegative");
  }
  if (seed_rows_a < 2 || seed_rows_b < 2) throw ConfigError("seed populations need >= 2 rows");
  if (seed_csv_a.has_value() != seed_csv_b.has_value()) throw ConfigError("give both seed CSV files or neither");
  if (rows_a() < static_cast<Eigen::Index>(cv_folds) || rows_b() < 1) throw ConfigError("scale too small");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

std::vector<std::string> ExperimentConfig::all_methods() const {
  std::vector<std::string> out = methods;
  for (double a : alpha_sweep) out.push_back("wdgrl_a" + full_precision(a));
  for (double b : beta_sweep) out.push_back("wdgrl_b" + full_precision(b));
  return out;
}

Eigen::Index ExperimentConfig::rows_a() const { return static_cast<Eigen::Index>(std::llround(5830.0 * scale)); }
Eigen::Index ExperimentConfig::rows_b() const { return static_cast<Eigen::Index>(std::llround(3866.0 * scale)); }

ExperimentConfig config_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"theta_grid", "seeds", "base_seed", "methods", "variants", "noise", "phi", "scale", "full", "top_k",
                  "slack_sigma", "horizon_spread", "node_cap", "tuning", "wdgrl", "sensitivity", "reveal",
                  "seed_data", "threads"},
                 "config");
  ExperimentConfig cfg;
  read(j, "theta_grid", cfg.theta_grid);
  read(j, "seeds", cfg.seeds);
  read(j, "base_seed", cfg.base_seed);
  read(j, "methods", cfg.methods);
  if (j.contains("variants")) {
    cfg.variants.clear();
    for (const auto& vj : j.at("variants")) {
      reject_unknown(vj, {"name", "capacity", "c_early", "c_tardy"}, "variants");
      ScheduleVariant v;
      read(vj, "name", v.name);
      read(vj, "capacity", v.capacity);
      read(vj, "c_early", v.c_early);
      read(vj, "c_tardy", v.c_tardy);
      cfg.variants.push_back(v);
    }
  }
  try {
    if (j.contains("noise")) cfg.noise = parse_noise_kind(j.at("noise").get<std::string>());
    if (j.contains("phi")) cfg.phi = parse_phi_kind(j.at("phi").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  read(j, "scale", cfg.scale);
  bool full = false;
  read(j, "full", full);
  if (full) cfg.scale = 1.0;
  read(j, "top_k", cfg.top_k);
  read(j, "slack_sigma", cfg.slack_sigma);
  read(j, "horizon_spread", cfg.horizon_spread);
  read(j, "node_cap", cfg.node_cap);
  if (j.contains("tuning")) {
    const auto& tj = j.at("tuning");
    reject_unknown(tj, {"mode", "folds", "dnn", "elastic_net"}, "tuning");
    const std::string mode = tj.value("mode", "grid");
    if (mode == "grid") {
      cfg.tuning = TuningMode::grid;
    } else if (mode == "fixed") {
      cfg.tuning = TuningMode::fixed;
    } else {
      throw ConfigError("tuning.mode must be grid or fixed");
    }
    read(tj, "folds", cfg.cv_folds);
    if (tj.contains("dnn")) cfg.dnn = hyper_from(tj.at("dnn"));
    if (tj.contains("elastic_net")) {
      const auto& ej = tj.at("elastic_net");
      reject_unknown(ej, {"lambda", "ratio"}, "tuning.elastic_net");
      read(ej, "lambda", cfg.elastic_net.lambda);
      read(ej, "ratio", cfg.elastic_net.ratio);
    }
  }
  if (j.contains("wdgrl")) {
    const auto& wj = j.at("wdgrl");
    reject_unknown(wj, {"alpha", "beta", "n_critic", "critic_width", "critic_learning_rate"}, "wdgrl");
    read(wj, "alpha", cfg.wdgrl.alpha);
    read(wj, "beta", cfg.wdgrl.beta);
    read(wj, "n_critic", cfg.wdgrl.n_critic);
    read(wj, "critic_width", cfg.wdgrl.critic_width);
    if (wj.contains("critic_learning_rate")) cfg.wdgrl.critic_learning_rate = wj.at("critic_learning_rate").get<double>();
  }
  if (j.contains("sensitivity")) {
    const auto& sj = j.at("sensitivity");
    reject_unknown(sj, {"alpha", "beta"}, "sensitivity");
    read(sj, "alpha", cfg.alpha_sweep);
    read(sj, "beta", cfg.beta_sweep);
  }
  if (j.contains("reveal")) {
    const auto& rj = j.at("reveal");
    reject_unknown(rj, {"window_days", "finetune_epochs"}, "reveal");
    read(rj, "window_days", cfg.reveal_window);
    read(rj, "finetune_epochs", cfg.finetune_epochs);
  }
  if (j.contains("seed_data")) {
    const auto& dj = j.at("seed_data");
    reject_unknown(dj, {"rows_a", "rows_b", "csv_a", "csv_b"}, "seed_data");
    read(dj, "rows_a", cfg.seed_rows_a);
    read(dj, "rows_b", cfg.seed_rows_b);
    if (dj.contains("csv_a")) cfg.seed_csv_a = dj.at("csv_a").get<std::string>();
    if (dj.contains("csv_b")) cfg.seed_csv_b = dj.at("csv_b").get<std::string>();
  }
  read(j, "threads", cfg.threads);
  cfg.validate();
  return cfg;
}

std::string config_to_text(const ExperimentConfig& cfg) {
  json variants = json::array();
  for (const auto& v : cfg.variants) {
    variants.push_back({{"name", v.name}, {"capacity", v.capacity}, {"c_early", v.c_early}, {"c_tardy", v.c_tardy}});
  }
  json wdgrl{{"alpha", cfg.wdgrl.alpha},
             {"beta", cfg.wdgrl.beta},
             {"n_critic", cfg.wdgrl.n_critic},
             {"critic_width", cfg.wdgrl.critic_width}};
  if (cfg.wdgrl.critic_learning_rate) wdgrl["critic_learning_rate"] = *cfg.wdgrl.critic_learning_rate;
  json seed_data{{"rows_a", cfg.seed_rows_a}, {"rows_b", cfg.seed_rows_b}};
  if (cfg.seed_csv_a) seed_data["csv_a"] = cfg.seed_csv_a->string();
  if (cfg.seed_csv_b) seed_data["csv_b"] = cfg.seed_csv_b->string();
  json j{{"theta_grid", cfg.theta_grid},
         {"seeds", cfg.seeds},
         {"base_seed", cfg.base_seed},
         {"methods", cfg.methods},
         {"variants", variants},
         {"noise", to_string(cfg.noise)},
         {"phi", to_string(cfg.phi)},
         {"scale", cfg.scale},
         {"top_k", cfg.top_k},
         {"slack_sigma", cfg.slack_sigma},
         {"horizon_spread", cfg.horizon_spread},
         {"node_cap", cfg.node_cap},
         {"tuning",
          {{"mode", cfg.tuning == TuningMode::grid ? "grid" : "fixed"},
           {"folds", cfg.cv_folds},
           {"dnn", hyper_json(cfg.dnn)},
           {"elastic_net", {{"lambda", cfg.elastic_net.lambda}, {"ratio", cfg.elastic_net.ratio}}}}},
         {"wdgrl", wdgrl},
         {"sensitivity", {{"alpha", cfg.alpha_sweep}, {"beta", cfg.beta_sweep}}},
         {"reveal", {{"window_days", cfg.reveal_window}, {"finetune_epochs", cfg.finetune_epochs}}},
         {"seed_data", seed_data},
         {"threads", cfg.threads}};
  return j.dump(2);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str());
}

}  // namespace shiftsched::harness
