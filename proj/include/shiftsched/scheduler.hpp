#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shiftsched::sched {

struct Order {
  int id = 0;
  int due = 1;                     // slot index, 1-based
  double predicted = 0.0;          // days
  std::optional<double> realized;  // days; evaluation only
};

/// Start-time assignment problem over slots 1..horizon. Capacity is checked
/// under `footprint` durations when given, else under the predictions.
struct SchedulingInstance {
  std::vector<Order> orders;
  int horizon = 1;
  std::vector<int> capacity;  // capacity[t-1] = K_t
  double c_early = 1.0;
  double c_tardy = 1.0;
  std::optional<std::vector<double>> footprint;

  [[nodiscard]] std::size_t size() const noexcept { return orders.size(); }
  [[nodiscard]] double footprint_duration(std::size_t i) const;
  void validate() const;
};

class InvalidInstanceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SizeGuardError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// max(due) + ceil(max(predicted)) + 5.
int default_horizon(std::span<const int> due, std::span<const double> predicted);

/// Orders get ids 0..m-1 and constant capacity; horizon defaults as above.
SchedulingInstance make_instance(std::span<const int> due, std::span<const double> predicted,
                                 std::optional<std::vector<double>> realized, int capacity, double c_early,
                                 double c_tardy, std::optional<int> horizon = std::nullopt);

/// The k orders with the smallest due dates (ties by position), in that order.
/// The horizon is recomputed for the subset when `rehorizon` is set.
SchedulingInstance top_k_by_due_date(const SchedulingInstance& inst, std::size_t k, bool rehorizon = true);

double start_cost(const SchedulingInstance& inst, std::size_t i, int t);

/// Slots an order of this duration occupies: max(1, ceil(duration)).
int footprint_slots(double duration);

/// Orders i with start_i <= t < start_i + footprint_slots(duration_i).
int occupancy(std::span<const int> start, std::span<const double> durations, int t);

struct Schedule {
  std::vector<int> start;  // start[i] for order i, 1-based slots
};

struct SolveResult {
  Schedule schedule;
  double objective = 0.0;
  bool feasible = false;
  bool optimal = false;
  std::int64_t nodes = 0;
};

bool is_feasible(const SchedulingInstance& inst, const Schedule& s);
double objective(const SchedulingInstance& inst, const Schedule& s);

/// Exhaustive enumeration; requires horizon^m <= 1e7.
SolveResult solve_bruteforce(const SchedulingInstance& inst);

struct SolverLimits {
  std::int64_t node_cap = 20000;  // node expansions
};

/// Best-first branch and bound in due-date order with a capacity-relaxed
/// lower bound and a greedy incumbent.
SolveResult solve_branch_and_bound(const SchedulingInstance& inst, const SolverLimits& limits = {});

/// Greedy: due-date order, cheapest feasible slot, lowest slot on ties.
SolveResult solve_greedy(const SchedulingInstance& inst);

double realized_cost(const Schedule& s, std::span<const double> realized, std::span<const int> due, double c_early,
                     double c_tardy);
double realized_cost(const SchedulingInstance& inst, const Schedule& s);

/// Solves with predicted := realized (an explicit footprint is kept).
SolveResult oracle_schedule(const SchedulingInstance& inst, const SolverLimits& limits = {});

// Structured-text instance and schedule files.
std::string instance_to_text(const SchedulingInstance& inst);
SchedulingInstance instance_from_text(const std::string& text);
SchedulingInstance load_instance(const std::filesystem::path& path);
void save_instance(const SchedulingInstance& inst, const std::filesystem::path& path);

std::string schedule_to_text(const SchedulingInstance& inst, const SolveResult& r);
std::string schedule_to_csv(const SchedulingInstance& inst, const SolveResult& r);

}  // namespace shiftsched::sched
