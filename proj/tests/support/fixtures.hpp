#pragma once

// Small deterministic scenario builders shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "flexq/env.hpp"
#include "flexq/optimiser.hpp"

namespace flexq::testing {

inline env::HouseholdParams household(std::size_t horizon) {
  env::HouseholdParams hp;
  hp.comfort = env::comfort_schedule(horizon, 20.0, 16.0, 3.0, {{7, 10}, {17, 22}});
  hp.initial_thermal = {16.0, 16.0};
  return hp;
}

inline env::GridParams two_level_grid(std::size_t horizon, double off_peak = 0.10, double peak = 0.25) {
  env::GridParams g;
  for (std::size_t t = 0; t < horizon; ++t) {
    const int h = static_cast<int>(t % 24);
    const double carbon = 0.2 * 0.07;
    g.cost.push_back(((h >= 16 && h < 19) ? peak : off_peak) + carbon);
    g.carbon_cost.push_back(carbon);
  }
  return g;
}

inline env::GridParams random_grid(std::size_t horizon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> price(0.05, 0.35), intensity(0.1, 0.35);
  env::GridParams g;
  for (std::size_t t = 0; t < horizon; ++t) {
    const double carbon = intensity(rng) * 0.07;
    g.cost.push_back(price(rng) + carbon);
    g.carbon_cost.push_back(carbon);
  }
  return g;
}

/// Random but always feasible household day: demand, a PV bell and at most one round trip.
inline DayProfile random_day(std::size_t horizon, std::mt19937_64& rng, double trip_probability = 0.7) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DayProfile d = DayProfile::flat(horizon);
  const double pv_peak = 1.5 * u(rng);
  const double base_temp = -2.0 + 10.0 * u(rng);
  for (std::size_t t = 0; t < horizon; ++t) {
    const double hour = static_cast<double>(t % 24);
    d.household_demand[t] = 0.2 + 1.3 * u(rng);
    d.pv_generation[t] = (hour >= 8 && hour <= 16) ? pv_peak * std::sin(M_PI * (hour - 7.0) / 10.0) : 0.0;
    d.external_temp[t] = base_temp + 3.0 * std::sin(M_PI * (hour - 9.0) / 12.0);
  }
  if (horizon >= 6 && u(rng) < trip_probability) {
    const int n = static_cast<int>(horizon);
    const int leave = std::uniform_int_distribution<int>(1, std::max(1, n - 4))(rng);
    const int back = std::min(n - 2, leave + std::uniform_int_distribution<int>(0, 8)(rng));
    const double energy = 2.0 + 14.0 * u(rng);
    for (int t = leave; t <= back; ++t) d.ev_at_home[t] = false;
    d.ev_demand[leave] += 0.5 * energy;
    d.ev_demand[back] += 0.5 * energy;
  }
  return d;
}

/// Expresses an environment day as a schedule, allocating flexible consumption earliest deadline first.
inline optimiser::OptimalSchedule schedule_from_trace(const optimiser::DayProblem& pb, const env::DayTrace& trace) {
  optimiser::OptimalSchedule s;
  const int T = pb.horizon;
  s.net_import.assign(T, 0.0);
  for (std::size_t i = 0; i < trace.agents.size(); ++i) {
    optimiser::AgentSchedule a;
    a.partial.assign(T, std::vector<double>(T, 0.0));
    for (int t = 0; t < T; ++t) {
      const auto& rec = trace.agents[i][t];
      const auto& d = rec.decisions;
      a.b_in.push_back(d.b_in);
      a.b_out.push_back(d.b_out);
      a.heating.push_back(d.heating);
      a.consumption.push_back(d.consumption);
      a.import.push_back(d.import);
      a.exports.push_back(std::max(-d.import, 0.0));
      a.battery.push_back(rec.before.battery);
      a.t_mass.push_back(rec.before.thermal.mass);
      a.t_air.push_back(rec.before.thermal.air);
      double flexible = d.flexible;
      for (const auto& e : rec.before.queue.entries) {
        if (e.deadline <= t) {
          a.partial[e.demand_step][t] += e.remaining;
          continue;
        }
        const double used = std::min(e.remaining, flexible);
        a.partial[e.demand_step][t] += used;
        flexible -= used;
      }
      s.net_import[t] += d.import;
    }
    a.battery.push_back(trace.final_states[i].battery);
    a.t_mass.push_back(trace.final_states[i].thermal.mass);
    a.t_air.push_back(trace.final_states[i].thermal.air);
    s.agents.push_back(std::move(a));
  }
  std::vector<env::Decisions> step(trace.agents.size());
  for (int t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < trace.agents.size(); ++i) step[i] = trace.agents[i][t].decisions;
    s.step_rewards.push_back(env::step_system(step, pb.grid, t, pb.params.battery.depreciation));
    s.reward += s.step_rewards.back();
  }
  s.objective = s.reward.total();
  return s;
}

}  // namespace flexq::testing
