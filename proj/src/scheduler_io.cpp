#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shiftsched/scheduler.hpp"

namespace shiftsched::sched {
namespace {

using nlohmann::json;

constexpr const char* kInstanceFormat = "shiftsched.instance";
constexpr const char* kScheduleFormat = "shiftsched.schedule";

std::string full_precision(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string instance_to_text(const SchedulingInstance& inst) {
  json orders = json::array();
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& o = inst.orders[i];
    json oj{{"id", o.id}, {"due", o.due}, {"predicted", o.predicted}};
    if (o.realized) oj["realized"] = *o.realized;
    if (inst.footprint) oj["footprint"] = (*inst.footprint)[i];
    orders.push_back(oj);
  }
  json j{{"format", kInstanceFormat}, {"horizon", inst.horizon}, {"capacity", inst.capacity},
         {"c_early", inst.c_early},   {"c_tardy", inst.c_tardy}, {"orders", orders}};
  return j.dump(1);
}

SchedulingInstance instance_from_text(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != kInstanceFormat) throw InvalidInstanceError("not a shiftsched instance file");
  SchedulingInstance inst;
  inst.c_early = j.value("c_early", 1.0);
  inst.c_tardy = j.value("c_tardy", 1.0);
  bool any_footprint = false;
  bool all_footprint = true;
  std::vector<double> fp;
  for (const auto& oj : j.at("orders")) {
    Order o;
    o.id = oj.value("id", static_cast<int>(inst.orders.size()));
    o.due = oj.at("due").get<int>();
    o.predicted = oj.at("predicted").get<double>();
    if (oj.contains("realized")) o.realized = oj.at("realized").get<double>();
    if (oj.contains("footprint")) {
      any_footprint = true;
      fp.push_back(oj.at("footprint").get<double>());
    } else {
      all_footprint = false;
    }
    inst.orders.push_back(o);
  }
  if (any_footprint) {
    if (!all_footprint) throw InvalidInstanceError("footprint must be given for all orders or none");
    inst.footprint = std::move(fp);
  }
  std::vector<int> due;
  std::vector<double> pred;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    due.push_back(inst.orders[i].due);
    pred.push_back(inst.footprint_duration(i));
  }
  inst.horizon = j.contains("horizon") ? j.at("horizon").get<int>() : default_horizon(due, pred);
  const auto& cap = j.at("capacity");
  if (cap.is_number_integer()) {
    inst.capacity.assign(static_cast<std::size_t>(std::max(1, inst.horizon)), cap.get<int>());
  } else {
    inst.capacity = cap.get<std::vector<int>>();
  }
  inst.validate();
  return inst;
}

SchedulingInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return instance_from_text(ss.str());
}

void save_instance(const SchedulingInstance& inst, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << instance_to_text(inst) << '\n';
}

std::string schedule_to_text(const SchedulingInstance& inst, const SolveResult& r) {
  json starts = json::array();
  if (r.feasible) {
    for (std::size_t i = 0; i < inst.size(); ++i) {
      starts.push_back({{"id", inst.orders[i].id}, {"start", r.schedule.start[i]}});
    }
  }
  json j{{"format", kScheduleFormat}, {"feasible", r.feasible}, {"optimal", r.optimal},
         {"nodes", r.nodes},          {"starts", starts}};
  j["objective"] = r.feasible ? json(r.objective) : json(nullptr);
  if (r.feasible && std::all_of(inst.orders.begin(), inst.orders.end(), [](const Order& o) { return o.realized; })) {
    j["realized_cost"] = realized_cost(inst, r.schedule);
  }
  return j.dump(1);
}

std::string schedule_to_csv(const SchedulingInstance& inst, const SolveResult& r) {
  std::ostringstream out;
  out << "id,due,predicted,start,start_cost\n";
  if (!r.feasible) return out.str();
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& o = inst.orders[i];
    out << o.id << ',' << o.due << ',' << full_precision(o.predicted) << ',' << r.schedule.start[i] << ','
        << full_precision(start_cost(inst, i, r.schedule.start[i])) << '\n';
  }
  return out.str();
}

}  // namespace shiftsched::sched
