#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexq/day_profile.hpp"
#include "flexq/env.hpp"
#include "flexq/experience.hpp"
#include "flexq/qp.hpp"

namespace flexq::optimiser {

class InfeasibleProblem : public std::runtime_error {
 public:
  InfeasibleProblem(const std::string& family, const std::string& what)
      : std::runtime_error(family + ": " + what), family_(family) {}
  const std::string& family() const { return family_; }

 private:
  std::string family_;
};

/// Column layout of one agent's variables.
struct AgentIndex {
  int b_in = 0, b_out = 0, heating = 0, exports = 0, t_mass = 0, t_air = 0, battery = 0;  // + step
  struct Flex {
    int demand_step = 0;
    int consume_step = 0;
    int column = 0;
  };
  std::vector<Flex> flex;  // one column per (demand step, consumption step) with f = 1
};

struct DayProblem {
  std::vector<DayProfile> profiles;
  env::HouseholdParams params;
  env::GridParams grid;
  int horizon = 0;
  std::vector<AgentIndex> agents;
  int grid_column = 0;  // + step
  qp::Problem qp;

  int variables() const { return qp.variables(); }
  /// Flexibility matrix entry f[t_D][t_C].
  bool flexible(int demand_step, int consume_step) const;
};

/// Assembles the day-horizon program. Throws InfeasibleProblem when trips or comfort cannot be met.
DayProblem build_problem(const std::vector<DayProfile>& profiles, const env::HouseholdParams& params,
                         const env::GridParams& grid);

struct AgentSchedule {
  std::vector<double> b_in, b_out, heating, consumption, import, exports;  // per step
  std::vector<double> battery, t_mass, t_air;                              // per step boundary, T + 1 values
  std::vector<std::vector<double>> partial;  // partial[t_D][t_C], consumption of step t_D demand at t_C

  env::Decisions decisions(int step, double due_load) const;
};

struct OptimalSchedule {
  std::vector<AgentSchedule> agents;
  std::vector<double> net_import;                  // g per step
  std::vector<env::RewardBreakdown> step_rewards;  // recomputed from the decisions
  env::RewardBreakdown reward;                     // day total
  double objective = 0.0;                          // F, minus the program's cost
  qp::KktResiduals residuals;
  int iterations = 0;
};

OptimalSchedule solve_day(const DayProblem& problem, const qp::Settings& settings = {});

/// Household state of agent i at the start of step t implied by the schedule.
env::HouseholdState schedule_state(const DayProblem& problem, const OptimalSchedule& schedule, std::size_t agent,
                                   int step);

/// Recorded decisions of the schedule, for independent constraint checks.
env::DayTrace schedule_trace(const DayProblem& problem, const OptimalSchedule& schedule);

/// Grid action whose mapped decisions are closest in L1 over (b_in, b_out, h, c); ties go to lower psi.
int nearest_action(const env::Decisions& target, const env::HouseholdState& state, const env::AgentDay& day,
                   const std::vector<double>& action_grid);

/// One tuple per agent and step. states[t] is the discretised state of step t.
std::vector<ExperienceTuple> extract_experience(const DayProblem& problem, const OptimalSchedule& schedule,
                                                const std::vector<int>& states,
                                                const std::vector<double>& action_grid, bool with_marginal);

void write_schedule_csv(std::ostream& out, const DayProblem& problem, const OptimalSchedule& schedule);

}  // namespace flexq::optimiser
