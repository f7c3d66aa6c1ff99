#include "doctest.h"

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "flexq/env.hpp"

using namespace flexq;
using namespace flexq::env;

namespace {

HouseholdParams wide_comfort(std::size_t n) {
  auto hp = testing::household(n);
  hp.comfort.lower.assign(n, 0.0);
  hp.comfort.upper.assign(n, 40.0);
  return hp;
}

}  // namespace

TEST_CASE("passive action charges a plugged-in car and serves all flexible load") {
  const auto hp = wide_comfort(24);
  auto day = DayProfile::flat(24, 1.0);
  AgentDay ad(day, hp);
  const auto s0 = ad.initial_state();
  const auto d = map_action(1.0, s0, ad);
  CHECK(d.b_in == doctest::Approx(std::min(hp.battery.max_charge, hp.battery.capacity - s0.battery)));
  CHECK(d.b_out == 0.0);
  CHECK(d.consumption == doctest::Approx(1.0));
  CHECK(d.flexible == doctest::Approx(0.1));
}

TEST_CASE("psi = 0 exports all dischargeable storage and defers flexible loads") {
  const auto hp = wide_comfort(24);
  auto day = DayProfile::flat(24, 1.0);
  AgentDay ad(day, hp);
  const auto s0 = ad.initial_state();
  const auto d = map_action(0.0, s0, ad);
  CHECK(d.b_out == doctest::Approx(s0.battery - ad.envelope.floor[1]));
  CHECK(d.b_in == 0.0);
  CHECK(d.flexible == 0.0);
  CHECK(d.consumption == doctest::Approx(0.9));
  CHECK(d.heating == 0.0);
  CHECK(d.import < 0.0);
}

TEST_CASE("no flexibility means every psi gives the same decisions") {
  auto hp = testing::household(24);
  hp.battery.capacity = hp.battery.min_level = hp.battery.initial_level = 0.0;
  hp.battery.max_charge = 0.0;
  hp.flex.flexible_share = 0.0;
  // Zero-width comfort band: h_min = h_max.
  hp.comfort.lower.assign(24, 19.0);
  hp.comfort.upper.assign(24, 19.0);
  auto day = DayProfile::flat(24, 0.8);
  AgentDay ad(day, hp);
  const auto s0 = ad.initial_state();
  const auto ref = map_action(1.0, s0, ad);
  const auto spans = flexibility_spans(s0, ad);
  CHECK(ref.consumption == doctest::Approx(0.8));
  CHECK(ref.import == doctest::Approx(0.8 + spans.h_min));
  for (double psi : action_grid(10)) {
    const auto d = map_action(psi, s0, ad);
    CHECK(d.b_in == ref.b_in);
    CHECK(d.b_out == ref.b_out);
    CHECK(d.heating == doctest::Approx(ref.heating));
    CHECK(d.consumption == ref.consumption);
    CHECK(d.import == doctest::Approx(ref.import));
  }
}

TEST_CASE("action grid spans [0, 1] inclusive") {
  const auto g = action_grid(10);
  CHECK(g.size() == 10);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == 1.0);
  CHECK(g[3] == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS(action_grid(1));
}

TEST_CASE("map_action rejects psi outside [0,1]") {
  const auto hp = wide_comfort(24);
  auto day = DayProfile::flat(24, 1.0);
  AgentDay ad(day, hp);
  CHECK_THROWS_AS(map_action(1.5, ad.initial_state(), ad), std::invalid_argument);
  CHECK_THROWS_AS(map_action(-0.1, ad.initial_state(), ad), std::invalid_argument);
}

TEST_CASE("import is non-decreasing in psi and storage costs are lowest in the consumption regime") {
  std::mt19937_64 rng(7);
  const auto hp = testing::household(24);
  const auto grid = action_grid(10);
  for (int trial = 0; trial < 60; ++trial) {
    auto day = testing::random_day(24, rng);
    DayRunner runner({day}, hp, testing::two_level_grid(24));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (!runner.done()) {
      const auto& st = runner.state(0);
      const auto& ad = runner.agent_day(0);
      double prev = -1e300;
      for (double psi : grid) {
        const auto d = map_action(psi, st, ad);
        CHECK(d.import >= prev - 1e-9);
        prev = d.import;
      }
      const auto s = flexibility_spans(st, ad);
      const double a = s.discharge_span(hp.battery), b = s.consumption_span(), c = s.charge_span(hp.battery);
      if (a + b + c > 0.0) {
        const double mid = (a + 0.5 * b) / (a + b + c);
        auto throughput = [&](double psi) {
          const auto d = map_action(psi, st, ad);
          return d.b_in + d.b_out;
        };
        CHECK(throughput(0.0) >= throughput(mid) - 1e-12);
        CHECK(throughput(1.0) >= throughput(mid) - 1e-12);
      }
      runner.advance(runner.decide({u(rng)}));
    }
  }
}

TEST_CASE("step_household battery arithmetic") {
  auto hp = wide_comfort(4);
  hp.battery.capacity = 20.0;
  hp.battery.min_level = 2.0;
  hp.battery.initial_level = 10.0;
  auto day = DayProfile::flat(4, 0.0);
  day.ev_at_home = {true, false, true, true};
  day.ev_demand = {0.0, 3.0, 0.0, 0.0};
  AgentDay ad(day, hp);
  const auto s = ad.initial_state();
  REQUIRE(s.battery == 10.0);

  SUBCASE("idle step keeps the level") {
    Decisions d;
    const auto next = step_household(s, d, ad);
    CHECK(next.battery == 10.0);
  }
  SUBCASE("charge while home then a trip") {
    Decisions d;
    d.b_in = 2.0;
    d.import = import_of(d, 0.0, hp.battery);
    auto next = step_household(s, d, ad);
    CHECK(next.battery == doctest::Approx(12.0));
    next = step_household(next, Decisions{}, ad);
    CHECK(next.battery == doctest::Approx(9.0));
  }
  SUBCASE("charging while away is a contract violation") {
    auto away = s;
    away.step = 1;
    Decisions d;
    d.b_in = 2.0;
    CHECK_THROWS_AS(step_household(away, d, ad), ContractViolation);
  }
}

TEST_CASE("a passive day ends at the initial battery level and respects every constraint") {
  std::mt19937_64 rng(11);
  const auto hp = testing::household(24);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DayProfile> days{testing::random_day(24, rng), testing::random_day(24, rng)};
    DayRunner runner(days, hp, testing::two_level_grid(24));
    const auto trace = run_day(runner, [](std::size_t, int, const DayRunner&) { return 1.0; });
    for (const auto& s : trace.final_states) CHECK(s.battery == doctest::Approx(hp.battery.initial_level).epsilon(1e-12));
    const auto rep = check_day(trace, days, hp);
    CHECK_MESSAGE(rep.ok(), rep.describe());
  }
}

TEST_CASE("random psi sequences respect every constraint") {
  std::mt19937_64 rng(5);
  const auto hp = testing::household(24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<DayProfile> days;
    for (int i = 0; i < 3; ++i) days.push_back(testing::random_day(24, rng));
    DayRunner runner(days, hp, testing::random_grid(24, rng));
    const auto trace = run_day(runner, [&](std::size_t, int, const DayRunner&) { return u(rng); });
    const auto rep = check_day(trace, days, hp);
    CHECK_MESSAGE(rep.ok(), rep.describe());
  }
}

TEST_CASE("check_day flags a late flexible load") {
  const auto hp = wide_comfort(8);
  auto day = DayProfile::flat(8, 1.0);
  DayRunner runner({day}, hp, testing::two_level_grid(8));
  auto trace = run_day(runner, [](std::size_t, int, const DayRunner&) { return 0.5; });
  CHECK(check_day(trace, {day}, hp).ok());
  trace.agents[0][7].decisions.consumption -= 0.05;
  trace.agents[0][7].decisions.import -= 0.05;
  CHECK(check_day(trace, {day}, hp).max_flex_violation > 1e-3);
}

TEST_CASE("step_system cost components") {
  auto grid = testing::two_level_grid(2);
  grid.cost = {0.2, 0.2};
  grid.carbon_cost = {0.05, 0.05};
  SUBCASE("idle community costs nothing") {
    const auto r = step_system({Decisions{}, Decisions{}}, grid, 0, 0.0156);
    CHECK(r.total() == 0.0);
  }
  SUBCASE("quadratic losses in kWh") {
    Decisions d;
    d.import = 10.0;
    const auto r = step_system({d}, grid, 0, 0.0);
    // 0.084 * (10 * 1000 / 415)^2 / 1000
    CHECK(r.losses == doctest::Approx(0.084 * std::pow(10000.0 / 415.0, 2) / 1000.0));
    CHECK(r.losses == doctest::Approx(0.0488).epsilon(1e-3));
    CHECK(r.grid == doctest::Approx(0.2 * (10.0 + r.losses)));
    CHECK(r.emissions == doctest::Approx(0.25 * r.grid));
  }
  SUBCASE("export charge") {
    Decisions exporter, importer;
    exporter.import = -2.0;
    importer.import = 2.0;
    grid.distribution_charge = 0.01;
    const auto r = step_system({exporter, importer}, grid, 0, 0.0);
    CHECK(r.distribution == doctest::Approx(0.02));
    CHECK(r.net_import == 0.0);
    CHECK(r.total() == doctest::Approx(-(r.grid + r.distribution + r.storage)));
  }
}

TEST_CASE("baseline is deterministic and saves nothing against itself") {
  std::mt19937_64 rng(3);
  const auto hp = testing::household(24);
  std::vector<DayProfile> days{testing::random_day(24, rng), testing::random_day(24, rng)};
  const auto grid = testing::two_level_grid(24);
  const auto a = baseline_day(days, hp, grid);
  const auto b = baseline_day(days, hp, grid);
  CHECK(a.total() == b.total());
  CHECK(a.total() - b.total() == 0.0);
}

TEST_CASE("unreachable trips are rejected") {
  const auto hp = testing::household(24);
  auto day = DayProfile::flat(24, 0.5);
  for (int t = 2; t < 20; ++t) day.ev_at_home[t] = false;
  day.ev_demand[2] = 80.0;
  CHECK_THROWS_AS(battery_envelope(day, hp.battery), InfeasibleSchedule);
  CHECK_THROWS_AS(AgentDay(day, hp), InfeasibleSchedule);
}

TEST_CASE("profile invariants are enforced") {
  auto day = DayProfile::flat(24, 0.5);
  day.ev_demand[3] = 1.0;  // consuming while plugged in
  CHECK_THROWS_AS(day.validate(), std::invalid_argument);
  day = DayProfile::flat(24, 0.5);
  day.pv_generation.pop_back();
  CHECK_THROWS_AS(day.validate(), std::invalid_argument);
}
