#include "flexq/household_source.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace flexq::scenario {

namespace {

profiles::Rng stream(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return profiles::Rng(seq);
}

}  // namespace

env::GridParams make_grid(const PriceSeries& series, double scc_per_kg, const env::GridParams& base,
                          std::size_t horizon) {
  if (series.price.size() != horizon || series.intensity.size() != horizon)
    throw std::invalid_argument("price and intensity series need " + std::to_string(horizon) + " values");
  env::GridParams g = base;
  g.cost.resize(horizon);
  g.carbon_cost.resize(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    g.carbon_cost[t] = series.intensity[t] * scc_per_kg;
    g.cost[t] = series.price[t] + g.carbon_cost[t];
  }
  g.validate(horizon);
  return g;
}

HouseholdScenario::HouseholdScenario(ScenarioSetup setup, int agents, std::uint64_t seed, int states, int actions)
    : setup_(std::move(setup)),
      agents_(agents),
      states_(states),
      psi_(env::action_grid(actions)),
      train_rng_(stream(seed, 1)),
      eval_rng_(stream(seed, 2)) {
  if (agents < 1) throw std::invalid_argument("at least one agent");
  train_chains_.reserve(agents);
  eval_chains_.reserve(agents);
  for (int i = 0; i < agents; ++i) {
    train_chains_.emplace_back(setup_.models, setup_.chain, train_rng_);
    eval_chains_.emplace_back(setup_.models, setup_.chain, eval_rng_);
  }
}

ScenarioDay HouseholdScenario::draw(std::vector<profiles::HouseholdChain>& chains, profiles::Rng& rng,
                                    bool with_schedule) {
  for (int attempt = 0; attempt <= setup_.max_redraws; ++attempt) {
    ScenarioDay day;
    for (auto& chain : chains) day.profiles.push_back(chain.next(rng));
    auto series = setup_.series;
    if (setup_.intensity_noise > 0.0) {
      std::normal_distribution<double> n(0.0, setup_.intensity_noise);
      for (double& x : series.intensity) x *= std::max(0.0, 1.0 + n(rng));
    }
    day.grid = make_grid(series, setup_.scc_per_kg, setup_.grid, kHoursPerDay);
    day.states = marl::day_states(day.grid.cost, states_);
    try {
      for (const auto& p : day.profiles) env::AgentDay(p, setup_.household);
      if (with_schedule) {
        day.problem = optimiser::build_problem(day.profiles, setup_.household, day.grid);
        day.schedule = optimiser::solve_day(*day.problem);
      }
      return day;
    } catch (const env::InfeasibleSchedule&) {
    } catch (const optimiser::InfeasibleProblem&) {
    } catch (const qp::SolveError&) {
    }
    ++redraws_;
  }
  throw std::runtime_error("no operable day after " + std::to_string(setup_.max_redraws) + " redraws");
}

ScenarioDay HouseholdScenario::next_training_day(bool with_schedule) {
  return draw(train_chains_, train_rng_, with_schedule);
}

ScenarioDay HouseholdScenario::next_evaluation_day(bool with_schedule) {
  return draw(eval_chains_, eval_rng_, with_schedule);
}

std::vector<ExperienceTuple> HouseholdScenario::explore(const marl::Learner& learner, marl::Rng& rng) {
  const auto day = next_training_day(false);
  env::DayRunner runner(day.profiles, setup_.household, day.grid);
  const int T = runner.horizon();
  const bool marginal = learner.strategy().needs_marginal();
  std::vector<std::vector<ExperienceTuple>> per_agent(agents_);
  std::vector<int> actions(agents_);
  std::vector<double> psi(agents_);
  while (!runner.done()) {
    const int t = runner.step_index();
    const int s = day.states[t];
    for (int i = 0; i < agents_; ++i) {
      actions[i] = learner.explore(i, s, rng);
      psi[i] = psi_[actions[i]];
    }
    const auto decisions = runner.decide(psi);
    const double total = runner.reward(decisions).total();
    for (int i = 0; i < agents_; ++i) {
      ExperienceTuple e;
      e.agent = i;
      e.step = t;
      e.state = s;
      e.action = actions[i];
      e.r_total = total;
      if (marginal) {
        e.r_marginal = total - runner.counterfactual(decisions, i).total();
        e.has_marginal = true;
      }
      e.terminal = t + 1 == T;
      e.next_state = e.terminal ? s : day.states[t + 1];
      per_agent[i].push_back(e);
    }
    runner.advance(decisions);
  }
  std::vector<ExperienceTuple> out;
  out.reserve(static_cast<std::size_t>(agents_) * T);
  for (auto& v : per_agent) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<ExperienceTuple> HouseholdScenario::optimise(const marl::Learner& learner, marl::Rng&) {
  const auto day = next_training_day(true);
  return optimiser::extract_experience(*day.problem, *day.schedule, day.states, psi_,
                                       learner.strategy().needs_marginal());
}

marl::Evaluation HouseholdScenario::evaluate(const marl::Learner& learner, marl::Rng&) {
  const auto day = next_evaluation_day(setup_.upper_bound);
  env::DayRunner runner(day.profiles, setup_.household, day.grid);
  std::vector<std::vector<int>> actions(agents_, std::vector<int>(runner.horizon()));
  const auto trace = env::run_day(runner, [&](std::size_t i, int t, const env::DayRunner&) {
    const int a = learner.greedy(static_cast<int>(i), day.states[t]);
    actions[i][t] = a;
    return psi_[a];
  });
  const auto baseline = env::baseline_day(day.profiles, setup_.household, day.grid);
  auto ev = marl::compare(trace.reward, baseline, agents_, runner.horizon());
  ev.constraints = env::check_day(trace, day.profiles, setup_.household);
  ev.actions = std::move(actions);
  if (day.schedule) {
    ev.upper_bound = 100.0 * (day.schedule->reward.total() - baseline.total()) / (agents_ * runner.horizon());
    ev.has_upper_bound = true;
  }
  return ev;
}

}  // namespace flexq::scenario
