#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "shiftsched/nn.hpp"
#include "shiftsched/scheduler.hpp"

using namespace shiftsched;
using namespace shiftsched::sched;

namespace {

SchedulingInstance random_instance(Rng& rng, int max_m, int max_t) {
  std::uniform_int_distribution<int> m_dist(1, max_m);
  std::uniform_int_distribution<int> t_dist(2, max_t);
  std::uniform_int_distribution<int> k_dist(1, 2);
  std::uniform_real_distribution<double> pred(0.0, 3.5);
  SchedulingInstance inst;
  const int m = m_dist(rng);
  inst.horizon = t_dist(rng);
  std::uniform_int_distribution<int> due(1, inst.horizon);
  for (int i = 0; i < m; ++i) inst.orders.push_back({i, due(rng), pred(rng), pred(rng)});
  for (int t = 0; t < inst.horizon; ++t) inst.capacity.push_back(k_dist(rng));
  inst.c_early = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  inst.c_tardy = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  return inst;
}

// Independent enumeration over every start vector, capacity checked slot by slot.
double enumerate_optimum(const SchedulingInstance& inst) {
  const std::size_t m = inst.size();
  std::vector<int> start(m, 1);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<int> load(static_cast<std::size_t>(inst.horizon), 0);
    double cost = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = inst.footprint ? (*inst.footprint)[i] : inst.orders[i].predicted;
      const int len = std::max(1, static_cast<int>(std::ceil(d)));
      for (int t = start[i]; t < start[i] + len && t <= inst.horizon; ++t) ++load[static_cast<std::size_t>(t - 1)];
      const double slack = inst.orders[i].due - start[i] - inst.orders[i].predicted;
      cost += slack > 0 ? inst.c_early * slack : -inst.c_tardy * slack;
    }
    bool ok = true;
    for (int t = 0; t < inst.horizon; ++t) ok = ok && load[static_cast<std::size_t>(t)] <= inst.capacity[static_cast<std::size_t>(t)];
    if (ok) best = std::min(best, cost);
    std::size_t j = 0;
    while (j < m && start[j] == inst.horizon) start[j++] = 1;
    if (j == m) break;
    ++start[j];
  }
  return best;
}

}  // namespace

TEST_CASE("start cost examples") {
  auto inst = make_instance(std::vector<int>{10}, std::vector<double>{3.0}, std::nullopt, 1, 1.0, 2.0, 12);
  CHECK(start_cost(inst, 0, 7) == doctest::Approx(0.0));
  CHECK(start_cost(inst, 0, 5) == doctest::Approx(2.0));
  CHECK(start_cost(inst, 0, 9) == doctest::Approx(4.0));
  inst.orders[0].predicted = 2.5;
  CHECK(start_cost(inst, 0, 7) == doctest::Approx(0.5));
}

TEST_CASE("footprint and occupancy") {
  CHECK(footprint_slots(0.0) == 1);
  CHECK(footprint_slots(0.2) == 1);
  CHECK(footprint_slots(2.0) == 2);
  CHECK(footprint_slots(2.01) == 3);
  const std::vector<int> start{1, 2};
  const std::vector<double> dur{2.0, 0.0};
  CHECK(occupancy(start, dur, 1) == 1);
  CHECK(occupancy(start, dur, 2) == 2);
  CHECK(occupancy(start, dur, 3) == 0);
}

TEST_CASE("default horizon and instance checks") {
  CHECK(default_horizon(std::vector<int>{3, 9}, std::vector<double>{1.2, 4.5}) == 9 + 5 + 5);
  SchedulingInstance bad;
  bad.horizon = 2;
  bad.capacity = {1};
  CHECK_THROWS_AS(bad.validate(), InvalidInstanceError);
  bad.capacity = {1, -1};
  CHECK_THROWS_AS(bad.validate(), InvalidInstanceError);
}

TEST_CASE("top k by due date keeps the earliest orders") {
  const auto inst = make_instance(std::vector<int>{5, 2, 9, 2, 7}, std::vector<double>{1, 2, 3, 4, 5}, std::nullopt,
                                  1, 1.0, 1.0);
  const auto top = top_k_by_due_date(inst, 3);
  REQUIRE(top.size() == 3);
  CHECK(top.orders[0].id == 1);
  CHECK(top.orders[1].id == 3);
  CHECK(top.orders[2].id == 0);
  CHECK(top.horizon == 5 + 4 + 5);
  CHECK(top_k_by_due_date(inst, 10).size() == 5);
}

TEST_CASE("two orders sharing one slot") {
  SchedulingInstance inst;
  inst.horizon = 4;
  inst.capacity = {1, 1, 1, 1};
  inst.orders = {{0, 3, 1.0, std::nullopt}, {1, 3, 1.0, std::nullopt}};
  const auto bb = solve_branch_and_bound(inst);
  const auto bf = solve_bruteforce(inst);
  REQUIRE(bb.feasible);
  CHECK(bb.optimal);
  CHECK(bb.objective == doctest::Approx(1.0));
  CHECK(bf.objective == doctest::Approx(1.0));
  CHECK(is_feasible(inst, bb.schedule));
}

TEST_CASE("branch and bound matches exhaustive search") {
  Rng rng(2024);
  int infeasible = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const auto inst = random_instance(rng, 5, 6);
    const double oracle = enumerate_optimum(inst);
    const auto bb = solve_branch_and_bound(inst);
    const auto bf = solve_bruteforce(inst);
    if (!std::isfinite(oracle)) {
      CHECK_FALSE(bb.feasible);
      CHECK_FALSE(bf.feasible);
      ++infeasible;
      continue;
    }
    REQUIRE(bb.feasible);
    CHECK(bb.optimal);
    CHECK(bb.objective == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(bf.objective == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(is_feasible(inst, bb.schedule));
    CHECK(objective(inst, bb.schedule) == doctest::Approx(bb.objective));
    const auto greedy = solve_greedy(inst);
    if (greedy.feasible) CHECK(greedy.objective >= bb.objective - 1e-9);
  }
  CHECK(infeasible < 150);
}

TEST_CASE("node cap returns the incumbent without claiming optimality") {
  Rng rng(5);
  std::vector<int> due(30);
  std::vector<double> pred(30);
  for (int i = 0; i < 30; ++i) {
    due[i] = 5 + i % 7;
    pred[i] = std::uniform_real_distribution<double>(0.0, 4.0)(rng);
  }
  const auto inst = make_instance(due, pred, std::nullopt, 8, 1.0, 1.0);
  const auto capped = solve_branch_and_bound(inst, {10});
  REQUIRE(capped.feasible);
  CHECK_FALSE(capped.optimal);
  CHECK(is_feasible(inst, capped.schedule));
  CHECK(capped.objective <= solve_greedy(inst).objective + 1e-9);
}

TEST_CASE("brute force refuses large instances") {
  std::vector<int> due(12, 20);
  std::vector<double> pred(12, 1.0);
  CHECK_THROWS_AS(solve_bruteforce(make_instance(due, pred, std::nullopt, 12, 1, 1)), SizeGuardError);
}

TEST_CASE("realized cost examples") {
  const Schedule s{{1, 4}};
  CHECK(realized_cost(s, std::vector<double>{2.0, 3.0}, std::vector<int>{5, 6}, 1.0, 2.0) ==
        doctest::Approx(2.0 + 2.0));
}

TEST_CASE("oracle schedule never loses to perturbed predictions under a shared footprint") {
  Rng rng(99);
  int violations = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto inst = random_instance(rng, 4, 6);
    std::vector<double> fp;
    for (const auto& o : inst.orders) fp.push_back(*o.realized);
    inst.footprint = fp;
    const auto oracle = oracle_schedule(inst);
    if (!oracle.feasible) continue;
    const double best = realized_cost(inst, oracle.schedule);
    std::normal_distribution<double> noise(0.0, 1.5);
    for (int p = 0; p < 10; ++p) {
      auto perturbed = inst;
      for (auto& o : perturbed.orders) o.predicted = std::max(0.0, *o.realized + noise(rng));
      const auto r = solve_branch_and_bound(perturbed);
      REQUIRE(r.feasible);
      if (realized_cost(inst, r.schedule) < best - 1e-9) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("instance text round trip") {
  Rng rng(3);
  auto inst = random_instance(rng, 6, 8);
  inst.footprint = std::vector<double>(inst.size(), 1.5);
  const auto back = instance_from_text(instance_to_text(inst));
  CHECK(instance_to_text(back) == instance_to_text(inst));
  CHECK(solve_bruteforce(back).objective == solve_bruteforce(inst).objective);

  const auto path = std::filesystem::temp_directory_path() / "shiftsched_instance_test.json";
  save_instance(inst, path);
  CHECK(instance_to_text(load_instance(path)) == instance_to_text(inst));
  std::filesystem::remove(path);
  CHECK_THROWS(instance_from_text("{\"horizon\": 2}"));

  const auto r = solve_branch_and_bound(inst);
  CHECK(schedule_to_csv(inst, r).rfind("id,", 0) == 0);
}
