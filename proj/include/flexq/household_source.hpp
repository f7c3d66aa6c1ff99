#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "flexq/env.hpp"
#include "flexq/marl.hpp"
#include "flexq/optimiser.hpp"
#include "flexq/profiles.hpp"

namespace flexq::scenario {

/// Time-of-use price [£/kWh] and grid carbon intensity [kgCO2/kWh] per step.
struct PriceSeries {
  std::vector<double> price;
  std::vector<double> intensity;
};

/// C_g = price + intensity x social cost of carbon [£/kg]. Throws on length mismatch.
env::GridParams make_grid(const PriceSeries& series, double scc_per_kg, const env::GridParams& base,
                          std::size_t horizon);

struct ScenarioSetup {
  env::HouseholdParams household;
  env::GridParams grid;           // line data and export charge, costs come from the series
  PriceSeries series;
  double scc_per_kg = 0.07;
  double intensity_noise = 0.0;   // relative standard deviation of the daily intensity draw
  profiles::SyntheticModels models;
  profiles::SyntheticConfig chain;  // weather and EV scaling of the household chains
  bool upper_bound = false;
  int max_redraws = 200;
};

/// One set of agent days with its grid costs and discretised states.
struct ScenarioDay {
  std::vector<DayProfile> profiles;
  env::GridParams grid;
  std::vector<int> states;
  std::optional<optimiser::DayProblem> problem;
  std::optional<optimiser::OptimalSchedule> schedule;
};

/// Households driven by Markov-chain profiles. Training and evaluation days come from separate streams.
class HouseholdScenario : public marl::ExperienceSource {
 public:
  HouseholdScenario(ScenarioSetup setup, int agents, std::uint64_t seed, int states = 3, int actions = 10);
  HouseholdScenario(const HouseholdScenario&) = delete;
  HouseholdScenario& operator=(const HouseholdScenario&) = delete;

  int agents() const override { return agents_; }
  int horizon() const override { return kHoursPerDay; }
  std::vector<ExperienceTuple> explore(const marl::Learner& learner, marl::Rng& rng) override;
  std::vector<ExperienceTuple> optimise(const marl::Learner& learner, marl::Rng& rng) override;
  marl::Evaluation evaluate(const marl::Learner& learner, marl::Rng& rng) override;

  /// Next training day, solved when with_schedule is set. Days that admit no feasible operation are redrawn.
  ScenarioDay next_training_day(bool with_schedule);
  ScenarioDay next_evaluation_day(bool with_schedule);

  const ScenarioSetup& setup() const { return setup_; }
  int redraws() const { return redraws_; }

 private:
  ScenarioDay draw(std::vector<profiles::HouseholdChain>& chains, profiles::Rng& rng, bool with_schedule);

  ScenarioSetup setup_;
  int agents_;
  int states_;
  std::vector<double> psi_;
  profiles::Rng train_rng_, eval_rng_;
  std::vector<profiles::HouseholdChain> train_chains_, eval_chains_;
  int redraws_ = 0;
};

}  // namespace flexq::scenario
