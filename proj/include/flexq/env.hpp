#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flexq/day_profile.hpp"
#include "flexq/thermal.hpp"

namespace flexq::env {

struct BatteryParams {
  double capacity = 75.0;      // E_max [kWh]
  double min_level = 7.5;      // E_min while plugged in [kWh]
  double initial_level = 37.5; // E_0, also the end-of-day target [kWh]
  double max_charge = 22.0;    // per step [kWh]
  double eta_charge = 0.93273790530888150;     // sqrt(0.87)
  double eta_discharge = 0.93273790530888150;
  double depreciation = 0.0156;  // C_s [£ per kWh throughput]

  void validate() const;
};

struct GridParams {
  std::vector<double> cost;         // C_g per step [£/kWh], price + carbon cost
  std::vector<double> carbon_cost;  // carbon intensity x social cost of carbon [£/kWh]
  double distribution_charge = 0.01;  // C_d on exports [£/kWh]
  double resistance = 0.084;          // [ohm]
  double voltage = 415.0;             // [V]

  /// Losses in kWh per kWh² of hourly net import: R (1000 g / V)² / 1000.
  double loss_coefficient() const { return 1000.0 * resistance / (voltage * voltage); }
  void validate(std::size_t horizon) const;
};

struct ComfortBounds {
  std::vector<double> lower;  // bound on the air temperature during step t
  std::vector<double> upper;
};

/// Per-step comfort band: target inside the listed [start, end) hour windows, setback elsewhere.
ComfortBounds comfort_schedule(std::size_t horizon, double target, double setback, double band,
                               const std::vector<std::pair<int, int>>& windows);

struct FlexParams {
  double flexible_share = 0.1;  // fraction of household demand that may be deferred
  int window = 5;               // n_flex steps past the demand step
};

struct HouseholdParams {
  BatteryParams battery;
  thermal::ThermalCoefficients kappa = thermal::ThermalCoefficients::reference();
  FlexParams flex;
  ComfortBounds comfort;
  thermal::ThermalState initial_thermal;
};

class InfeasibleSchedule : public std::runtime_error {
 public:
  explicit InfeasibleSchedule(const std::string& what) : std::runtime_error(what) {}
};

class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Battery level corridor from back-propagating trips and the end-of-day target.
/// floor[t] and ceiling[t] bound E at the start of step t, t = 0..T.
struct BatteryEnvelope {
  std::vector<double> floor;
  std::vector<double> ceiling;
};

BatteryEnvelope battery_envelope(const DayProfile& day, const BatteryParams& battery);

struct FlexEntry {
  double remaining = 0.0;
  int demand_step = 0;
  int deadline = 0;
};

/// Deferred flexible demand, ordered by deadline.
struct FlexQueue {
  std::vector<FlexEntry> entries;

  double due_at(int step) const;
  double deferrable_at(int step) const;
  double total() const;
};

struct HouseholdState {
  double battery = 0.0;
  thermal::ThermalState thermal;
  FlexQueue queue;
  int step = 0;
};

struct Decisions {
  double b_in = 0.0;
  double b_out = 0.0;
  double heating = 0.0;
  double consumption = 0.0;  // household consumption c, including due loads
  double flexible = 0.0;     // part of c served from not-yet-due entries
  double import = 0.0;       // p, negative when exporting
};

struct RewardBreakdown {
  double grid = 0.0;          // c_g, includes the emissions part
  double emissions = 0.0;
  double distribution = 0.0;  // c_d
  double storage = 0.0;       // c_s
  double net_import = 0.0;    // g
  double losses = 0.0;        // epsilon_g

  double cost() const { return grid + distribution + storage; }
  double total() const { return -cost(); }
  RewardBreakdown& operator+=(const RewardBreakdown& o);
};

/// Everything an agent needs to act on one day.
struct AgentDay {
  const DayProfile* profile = nullptr;
  const HouseholdParams* params = nullptr;
  BatteryEnvelope envelope;

  AgentDay() = default;
  AgentDay(const DayProfile& day, const HouseholdParams& hp);

  HouseholdState initial_state() const;
  double fixed_share_at(int step) const;
  double flexible_share_at(int step) const;
  int deadline_for(int demand_step) const;
};

/// Energy ranges available to the action mapping at one step.
struct FlexibilitySpans {
  double b_out_min = 0.0, b_out_max = 0.0;
  double b_in_min = 0.0, b_in_max = 0.0;
  double due_load = 0.0;
  double deferrable_load = 0.0;
  double h_min = 0.0, h_max = 0.0;
  bool comfort_feasible = true;

  double discharge_span(const BatteryParams& b) const { return b.eta_discharge * (b_out_max - b_out_min); }
  double consumption_span() const { return deferrable_load + (h_max - h_min); }
  double charge_span(const BatteryParams& b) const { return (b_in_max - b_in_min) / b.eta_charge; }
};

FlexibilitySpans flexibility_spans(const HouseholdState& state, const AgentDay& day);

/// Maps psi in [0,1] onto battery, heating and consumption decisions. Obligations are met first,
/// then the remaining flexibility is spent along: storage export, storage covering fixed loads,
/// flexible consumption (earliest deadline first, then heating), PV storage and grid charging.
Decisions map_action(double psi, const HouseholdState& state, const AgentDay& day);

/// psi for each of n equally spaced grid actions, 0 and 1 included.
std::vector<double> action_grid(int n_actions);

double import_of(const Decisions& d, double pv, const BatteryParams& b);

HouseholdState step_household(const HouseholdState& state, const Decisions& d, const AgentDay& day);

RewardBreakdown step_system(const std::vector<Decisions>& decisions, const GridParams& grid, int step,
                            double depreciation);

/// Runs the agents of one day in lock-step. Owns copies of its inputs.
class DayRunner {
 public:
  DayRunner(std::vector<DayProfile> days, HouseholdParams params, GridParams grid);
  DayRunner(const DayRunner&) = delete;
  DayRunner& operator=(const DayRunner&) = delete;

  std::size_t agents() const { return days_.size(); }
  int horizon() const { return horizon_; }
  int step_index() const { return step_; }
  bool done() const { return step_ >= horizon_; }
  const HouseholdState& state(std::size_t agent) const { return states_[agent]; }
  const AgentDay& agent_day(std::size_t agent) const { return days_[agent]; }
  const GridParams& grid() const { return grid_; }
  const HouseholdParams& params() const { return params_; }
  const DayProfile& profile(std::size_t agent) const { return profiles_[agent]; }

  /// Decisions for the given per-agent psi at the current step, without advancing.
  std::vector<Decisions> decide(const std::vector<double>& psi) const;
  RewardBreakdown reward(const std::vector<Decisions>& decisions) const;
  /// Reward at the current step if agent i played psi_default while the others kept their decisions.
  RewardBreakdown counterfactual(const std::vector<Decisions>& decisions, std::size_t agent,
                                 double psi_default = 1.0) const;
  void advance(const std::vector<Decisions>& decisions);

 private:
  std::vector<DayProfile> profiles_;
  HouseholdParams params_;
  GridParams grid_;
  std::vector<AgentDay> days_;
  std::vector<HouseholdState> states_;
  int horizon_;
  int step_ = 0;
};

/// Per-step record used for independent constraint checks.
struct StepRecord {
  HouseholdState before;
  Decisions decisions;
};

struct DayTrace {
  std::vector<std::vector<StepRecord>> agents;  // [agent][step]
  std::vector<HouseholdState> final_states;
  RewardBreakdown reward;
};

/// Runs a whole day with psi chosen by policy(agent, step, runner).
template <class Policy>
DayTrace run_day(DayRunner& runner, Policy&& policy) {
  DayTrace trace;
  trace.agents.resize(runner.agents());
  std::vector<double> psi(runner.agents());
  while (!runner.done()) {
    for (std::size_t i = 0; i < runner.agents(); ++i) psi[i] = policy(i, runner.step_index(), runner);
    auto decisions = runner.decide(psi);
    trace.reward += runner.reward(decisions);
    for (std::size_t i = 0; i < runner.agents(); ++i) trace.agents[i].push_back({runner.state(i), decisions[i]});
    runner.advance(decisions);
  }
  for (std::size_t i = 0; i < runner.agents(); ++i) trace.final_states.push_back(runner.state(i));
  return trace;
}

/// Every agent passive (psi = 1) for the day.
RewardBreakdown baseline_day(const std::vector<DayProfile>& days, const HouseholdParams& params,
                             const GridParams& grid);

struct ConstraintReport {
  double max_balance_residual = 0.0;
  double max_battery_violation = 0.0;
  double max_gating_violation = 0.0;
  double max_flex_violation = 0.0;
  double max_comfort_violation = 0.0;
  double max_terminal_violation = 0.0;
  double max_negativity = 0.0;

  bool ok(double balance_tol = 1e-9, double tol = 1e-6) const;
  std::string describe() const;
};

/// Recomputes every household constraint from recorded decisions, independently of map_action.
ConstraintReport check_day(const DayTrace& trace, const std::vector<DayProfile>& days,
                           const HouseholdParams& params);

}  // namespace flexq::env
