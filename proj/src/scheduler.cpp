#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "shiftsched/scheduler.hpp"

namespace shiftsched::sched {

double SchedulingInstance::footprint_duration(std::size_t i) const {
  return footprint ? (*footprint)[i] : orders[i].predicted;
}

void SchedulingInstance::validate() const {
  if (horizon < 1) throw InvalidInstanceError("horizon must be >= 1");
  if (static_cast<int>(capacity.size()) != horizon) throw InvalidInstanceError("capacity length must equal horizon");
  for (int k : capacity) {
    if (k < 0) throw InvalidInstanceError("capacity must be nonnegative");
  }
  if (!(c_early >= 0.0) || !(c_tardy >= 0.0)) throw InvalidInstanceError("cost rates must be nonnegative");
  if (footprint && footprint->size() != orders.size()) throw InvalidInstanceError("footprint length mismatch");
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const auto& o = orders[i];
    if (o.due < 1) throw InvalidInstanceError("due dates must be >= 1");
    if (o.due > horizon) throw InvalidInstanceError("horizon must cover every due date");
    if (!(o.predicted >= 0.0) || !std::isfinite(o.predicted)) {
      throw InvalidInstanceError("predicted durations must be finite and >= 0");
    }
    if (o.realized && !(*o.realized >= 0.0)) throw InvalidInstanceError("realized durations must be >= 0");
    if (footprint && !((*footprint)[i] >= 0.0)) throw InvalidInstanceError("footprint durations must be >= 0");
  }
}

int default_horizon(std::span<const int> due, std::span<const double> predicted) {
  const int max_due = due.empty() ? 1 : *std::max_element(due.begin(), due.end());
  const double max_pred = predicted.empty() ? 0.0 : *std::max_element(predicted.begin(), predicted.end());
  return std::max(1, max_due) + static_cast<int>(std::ceil(std::max(0.0, max_pred))) + 5;
}

SchedulingInstance make_instance(std::span<const int> due, std::span<const double> predicted,
                                 std::optional<std::vector<double>> realized, int capacity, double c_early,
                                 double c_tardy, std::optional<int> horizon) {
  if (due.size() != predicted.size()) throw InvalidInstanceError("due and predicted lengths differ");
  if (realized && realized->size() != due.size()) throw InvalidInstanceError("realized length differs");
  SchedulingInstance inst;
  inst.horizon = horizon.value_or(default_horizon(due, predicted));
  inst.capacity.assign(static_cast<std::size_t>(std::max(1, inst.horizon)), capacity);
  inst.c_early = c_early;
  inst.c_tardy = c_tardy;
  for (std::size_t i = 0; i < due.size(); ++i) {
    Order o;
    o.id = static_cast<int>(i);
    o.due = due[i];
    o.predicted = predicted[i];
    if (realized) o.realized = (*realized)[i];
    inst.orders.push_back(o);
  }
  inst.validate();
  return inst;
}

SchedulingInstance top_k_by_due_date(const SchedulingInstance& inst, std::size_t k, bool rehorizon) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<std::size_t> idx(inst.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return inst.orders[a].due < inst.orders[b].due; });
  idx.resize(std::min(k, idx.size()));
  SchedulingInstance out;
  out.c_early = inst.c_early;
  out.c_tardy = inst.c_tardy;
  std::vector<double> fp;
  for (std::size_t i : idx) {
    out.orders.push_back(inst.orders[i]);
    if (inst.footprint) fp.push_back((*inst.footprint)[i]);
  }
  if (inst.footprint) out.footprint = std::move(fp);
  if (rehorizon) {
    std::vector<int> due;
    std::vector<double> pred;
    for (std::size_t i = 0; i < out.size(); ++i) {
      due.push_back(out.orders[i].due);
      pred.push_back(out.footprint_duration(i));
    }
    out.horizon = default_horizon(due, pred);
    const int fill = inst.capacity.empty() ? 1 : inst.capacity.back();
    out.capacity.assign(static_cast<std::size_t>(out.horizon), fill);
    for (int t = 0; t < out.horizon && t < static_cast<int>(inst.capacity.size()); ++t) {
      out.capacity[static_cast<std::size_t>(t)] = inst.capacity[static_cast<std::size_t>(t)];
    }
  } else {
    out.horizon = inst.horizon;
    out.capacity = inst.capacity;
  }
  return out;
}

double start_cost(const SchedulingInstance& inst, std::size_t i, int t) {
  const auto& o = inst.orders[i];
  const double slack = static_cast<double>(o.due - t) - o.predicted;
  return inst.c_early * std::max(0.0, slack) + inst.c_tardy * std::max(0.0, -slack);
}

int footprint_slots(double duration) { return std::max(1, static_cast<int>(std::ceil(duration))); }

int occupancy(std::span<const int> start, std::span<const double> durations, int t) {
  int count = 0;
  for (std::size_t i = 0; i < start.size(); ++i) {
    if (start[i] <= t && t < start[i] + footprint_slots(durations[i])) ++count;
  }
  return count;
}

namespace {

std::vector<int> footprints(const SchedulingInstance& inst) {
  std::vector<int> fp(inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i) fp[i] = footprint_slots(inst.footprint_duration(i));
  return fp;
}

// Whether one more order fits in slots [t, t+len) clipped to the horizon.
bool fits(const std::vector<int>& load, const std::vector<int>& cap, int t, int len) {
  const int end = std::min(static_cast<int>(load.size()), t - 1 + len);
  for (int s = t - 1; s < end; ++s) {
    if (load[static_cast<std::size_t>(s)] + 1 > cap[static_cast<std::size_t>(s)]) return false;
  }
  return true;
}

void add_load(std::vector<int>& load, int t, int len, int delta) {
  const int end = std::min(static_cast<int>(load.size()), t - 1 + len);
  for (int s = t - 1; s < end; ++s) load[static_cast<std::size_t>(s)] += delta;
}

}  // namespace

bool is_feasible(const SchedulingInstance& inst, const Schedule& s) {
  if (s.start.size() != inst.size()) return false;
  const auto fp = footprints(inst);
  std::vector<int> load(static_cast<std::size_t>(inst.horizon), 0);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const int t = s.start[i];
    if (t < 1 || t > inst.horizon) return false;
    add_load(load, t, fp[i], 1);
  }
  for (int t = 0; t < inst.horizon; ++t) {
    if (load[static_cast<std::size_t>(t)] > inst.capacity[static_cast<std::size_t>(t)]) return false;
  }
  return true;
}

double objective(const SchedulingInstance& inst, const Schedule& s) {
  double total = 0.0;
  for (std::size_t i = 0; i < inst.size(); ++i) total += start_cost(inst, i, s.start[i]);
  return total;
}

SolveResult solve_bruteforce(const SchedulingInstance& inst) {
  inst.validate();
  const double space = std::pow(static_cast<double>(inst.horizon), static_cast<double>(inst.size()));
  if (space > 1e7) throw SizeGuardError("brute force limited to horizon^m <= 1e7");
  const std::size_t m = inst.size();
  const auto fp = footprints(inst);
  SolveResult best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<int> start(m, 1);
  std::vector<int> load(static_cast<std::size_t>(inst.horizon));
  while (true) {
    ++best.nodes;
    std::fill(load.begin(), load.end(), 0);
    bool ok = true;
    double cost = 0.0;
    for (std::size_t i = 0; i < m && ok; ++i) {
      ok = fits(load, inst.capacity, start[i], fp[i]);
      add_load(load, start[i], fp[i], 1);
      cost += start_cost(inst, i, start[i]);
    }
    if (ok && cost < best.objective) {
      best.objective = cost;
      best.schedule.start = start;
      best.feasible = true;
    }
    std::size_t pos = m;
    while (pos > 0 && start[pos - 1] == inst.horizon) {
      start[pos - 1] = 1;
      --pos;
    }
    if (pos == 0) break;
    ++start[pos - 1];
  }
  best.optimal = best.feasible;
  if (!best.feasible) best.objective = std::numeric_limits<double>::infinity();
  return best;
}

namespace {

std::vector<std::size_t> due_date_order(const SchedulingInstance& inst) {
  std::vector<std::size_t> order(inst.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return inst.orders[a].due < inst.orders[b].due; });
  return order;
}

}  // namespace

SolveResult solve_greedy(const SchedulingInstance& inst) {
  inst.validate();
  const auto fp = footprints(inst);
  SolveResult r;
  r.schedule.start.assign(inst.size(), 0);
  std::vector<int> load(static_cast<std::size_t>(inst.horizon), 0);
  r.feasible = true;
  for (std::size_t i : due_date_order(inst)) {
    int best_t = 0;
    double best_c = std::numeric_limits<double>::infinity();
    for (int t = 1; t <= inst.horizon; ++t) {
      if (!fits(load, inst.capacity, t, fp[i])) continue;
      const double c = start_cost(inst, i, t);
      if (c < best_c) {
        best_c = c;
        best_t = t;
      }
    }
    if (best_t == 0) {
      r.feasible = false;
      break;
    }
    r.schedule.start[i] = best_t;
    add_load(load, best_t, fp[i], 1);
    r.objective += best_c;
  }
  if (!r.feasible) {
    r.schedule.start.clear();
    r.objective = std::numeric_limits<double>::infinity();
  }
  return r;
}

SolveResult solve_branch_and_bound(const SchedulingInstance& inst, const SolverLimits& limits) {
  inst.validate();
  if (limits.node_cap < 1) throw std::invalid_argument("node cap must be >= 1");
  const std::size_t m = inst.size();
  const auto fp = footprints(inst);
  const auto order = due_date_order(inst);
  const int T = inst.horizon;

  // Capacity-relaxed completion bound per depth.
  std::vector<double> suffix(m + 1, 0.0);
  for (std::size_t k = m; k-- > 0;) {
    double best = std::numeric_limits<double>::infinity();
    for (int t = 1; t <= T; ++t) best = std::min(best, start_cost(inst, order[k], t));
    suffix[k] = suffix[k + 1] + best;
  }
  // Consecutive orders with identical data are interchangeable; their starts
  // are forced to be non-decreasing.
  std::vector<bool> same_as_prev(m, false);
  for (std::size_t k = 1; k < m; ++k) {
    const auto& a = inst.orders[order[k - 1]];
    const auto& b = inst.orders[order[k]];
    same_as_prev[k] = a.due == b.due && a.predicted == b.predicted && fp[order[k - 1]] == fp[order[k]];
  }

  SolveResult best = solve_greedy(inst);
  double incumbent = best.feasible ? best.objective : std::numeric_limits<double>::infinity();
  if (m == 0) {
    best.feasible = true;
    best.optimal = true;
    best.objective = 0.0;
    return best;
  }

  struct Node {
    std::int64_t parent;
    int slot;
    int depth;  // number of assigned orders
    double cost;
  };
  std::vector<Node> arena;
  arena.push_back({-1, 0, 0, 0.0});
  struct Entry {
    double bound;
    int depth;
    std::int64_t id;
  };
  const auto worse = [](const Entry& a, const Entry& b) {
    if (a.bound != b.bound) return a.bound > b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);
  open.push({suffix[0], 0, 0});

  std::vector<int> load(static_cast<std::size_t>(T));
  std::vector<int> partial(m);
  std::int64_t expanded = 0;
  bool exhausted = true;
  while (!open.empty()) {
    const Entry e = open.top();
    if (e.bound >= incumbent) break;
    if (expanded >= limits.node_cap) {
      exhausted = false;
      break;
    }
    open.pop();
    ++expanded;
    const Node node = arena[static_cast<std::size_t>(e.id)];

    std::fill(load.begin(), load.end(), 0);
    for (std::int64_t id = e.id; arena[static_cast<std::size_t>(id)].parent >= 0;
         id = arena[static_cast<std::size_t>(id)].parent) {
      const Node& a = arena[static_cast<std::size_t>(id)];
      const std::size_t i = order[static_cast<std::size_t>(a.depth - 1)];
      partial[static_cast<std::size_t>(a.depth - 1)] = a.slot;
      add_load(load, a.slot, fp[i], 1);
    }
    const auto k = static_cast<std::size_t>(node.depth);
    const std::size_t i = order[k];
    const int first = same_as_prev[k] && k > 0 ? partial[k - 1] : 1;
    for (int t = first; t <= T; ++t) {
      if (!fits(load, inst.capacity, t, fp[i])) continue;
      const double cost = node.cost + start_cost(inst, i, t);
      const double bound = cost + suffix[k + 1];
      if (bound >= incumbent) continue;
      if (k + 1 == m) {
        incumbent = cost;
        best.objective = cost;
        best.feasible = true;
        best.schedule.start.assign(m, 0);
        for (std::size_t j = 0; j < k; ++j) best.schedule.start[order[j]] = partial[j];
        best.schedule.start[i] = t;
        continue;
      }
      arena.push_back({e.id, t, node.depth + 1, cost});
      open.push({bound, node.depth + 1, static_cast<std::int64_t>(arena.size() - 1)});
    }
  }
  best.nodes = expanded;
  best.optimal = exhausted && best.feasible;
  if (!best.feasible) best.objective = std::numeric_limits<double>::infinity();
  return best;
}

double realized_cost(const Schedule& s, std::span<const double> realized, std::span<const int> due, double c_early,
                     double c_tardy) {
  if (s.start.size() != realized.size() || due.size() != realized.size()) {
    throw std::invalid_argument("schedule, realized and due lengths differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < realized.size(); ++i) {
    const double slack = static_cast<double>(due[i] - s.start[i]) - realized[i];
    total += c_early * std::max(0.0, slack) + c_tardy * std::max(0.0, -slack);
  }
  return total;
}

double realized_cost(const SchedulingInstance& inst, const Schedule& s) {
  std::vector<double> y;
  std::vector<int> due;
  for (const auto& o : inst.orders) {
    if (!o.realized) throw std::invalid_argument("realized durations required");
    y.push_back(*o.realized);
    due.push_back(o.due);
  }
  return realized_cost(s, y, due, inst.c_early, inst.c_tardy);
}

SolveResult oracle_schedule(const SchedulingInstance& inst, const SolverLimits& limits) {
  SchedulingInstance oracle = inst;
  for (auto& o : oracle.orders) {
    if (!o.realized) throw std::invalid_argument("oracle schedule needs realized durations");
    o.predicted = *o.realized;
  }
  return solve_branch_and_bound(oracle, limits);
}

}  // namespace shiftsched::sched
