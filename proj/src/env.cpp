#include "flexq/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flexq::env {

namespace {
constexpr double kTol = 1e-9;

void require(bool ok, const char* what) {
  if (!ok) throw ContractViolation(what);
}
}  // namespace

void BatteryParams::validate() const {
  if (!(0.0 <= min_level && min_level <= initial_level && initial_level <= capacity))
    throw std::invalid_argument("battery levels must satisfy 0 <= min <= initial <= capacity");
  if (!(eta_charge > 0.0 && eta_charge <= 1.0 && eta_discharge > 0.0 && eta_discharge <= 1.0))
    throw std::invalid_argument("battery efficiencies must lie in (0, 1]");
  if (!(max_charge >= 0.0) || !(depreciation >= 0.0))
    throw std::invalid_argument("battery charge rate and depreciation must be non-negative");
}

void GridParams::validate(std::size_t horizon) const {
  if (cost.size() != horizon || carbon_cost.size() != horizon)
    throw std::invalid_argument("grid cost series length does not match the horizon");
  for (std::size_t t = 0; t < horizon; ++t) {
    if (!(cost[t] > 0.0)) throw std::invalid_argument("grid cost coefficient must be positive");
    if (!(carbon_cost[t] >= 0.0)) throw std::invalid_argument("carbon cost must be non-negative");
  }
  if (!(distribution_charge >= 0.0)) throw std::invalid_argument("distribution charge must be non-negative");
  if (!(resistance >= 0.0) || !(voltage > 0.0)) throw std::invalid_argument("invalid grid electrical data");
}

ComfortBounds comfort_schedule(std::size_t horizon, double target, double setback, double band,
                               const std::vector<std::pair<int, int>>& windows) {
  ComfortBounds out;
  out.lower.resize(horizon);
  out.upper.resize(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    const int hour = static_cast<int>(t % kHoursPerDay);
    const bool comfort = std::any_of(windows.begin(), windows.end(),
                                     [hour](const auto& w) { return hour >= w.first && hour < w.second; });
    const double centre = comfort ? target : setback;
    out.lower[t] = centre - band;
    out.upper[t] = centre + band;
  }
  return out;
}

BatteryEnvelope battery_envelope(const DayProfile& day, const BatteryParams& b) {
  const int n = static_cast<int>(day.horizon());
  BatteryEnvelope env;
  env.floor.assign(n + 1, b.initial_level);
  env.ceiling.assign(n + 1, b.initial_level);
  for (int t = n - 1; t >= 0; --t) {
    const double trip = day.ev_demand[t];
    if (day.ev_at_home[t]) {
      env.floor[t] = std::max(b.min_level, env.floor[t + 1] + trip - b.max_charge);
      env.ceiling[t] = b.capacity;
    } else {
      env.floor[t] = std::max(0.0, env.floor[t + 1] + trip);
      env.ceiling[t] = std::min(b.capacity, env.ceiling[t + 1] + trip);
    }
    if (env.floor[t] > env.ceiling[t] + kTol)
      throw InfeasibleSchedule("infeasible EV schedule: trips cannot be served from step " + std::to_string(t));
  }
  if (b.initial_level < env.floor[0] - kTol || b.initial_level > env.ceiling[0] + kTol)
    throw InfeasibleSchedule("infeasible EV schedule: initial battery level outside the reachable corridor");
  return env;
}

double FlexQueue::due_at(int step) const {
  double s = 0.0;
  for (const auto& e : entries)
    if (e.deadline <= step) s += e.remaining;
  return s;
}

double FlexQueue::deferrable_at(int step) const {
  double s = 0.0;
  for (const auto& e : entries)
    if (e.deadline > step) s += e.remaining;
  return s;
}

double FlexQueue::total() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.remaining;
  return s;
}

RewardBreakdown& RewardBreakdown::operator+=(const RewardBreakdown& o) {
  grid += o.grid;
  emissions += o.emissions;
  distribution += o.distribution;
  storage += o.storage;
  net_import += o.net_import;
  losses += o.losses;
  return *this;
}

AgentDay::AgentDay(const DayProfile& day, const HouseholdParams& hp)
    : profile(&day), params(&hp), envelope(battery_envelope(day, hp.battery)) {
  day.validate();
  if (hp.comfort.lower.size() != day.horizon() || hp.comfort.upper.size() != day.horizon())
    throw std::invalid_argument("comfort bounds length does not match the horizon");
}

double AgentDay::fixed_share_at(int step) const {
  return (1.0 - params->flex.flexible_share) * profile->household_demand[step];
}

double AgentDay::flexible_share_at(int step) const {
  return params->flex.flexible_share * profile->household_demand[step];
}

int AgentDay::deadline_for(int demand_step) const {
  return std::min(demand_step + std::max(params->flex.window, 0), static_cast<int>(profile->horizon()) - 1);
}

HouseholdState AgentDay::initial_state() const {
  HouseholdState s;
  s.battery = params->battery.initial_level;
  s.thermal = params->initial_thermal;
  s.step = 0;
  const double flex = flexible_share_at(0);
  if (flex > 0.0) s.queue.entries.push_back({flex, 0, deadline_for(0)});
  return s;
}

FlexibilitySpans flexibility_spans(const HouseholdState& state, const AgentDay& day) {
  const DayProfile& p = *day.profile;
  const BatteryParams& b = day.params->battery;
  const int t = state.step;
  FlexibilitySpans s;

  const double after_trip = state.battery - p.ev_demand[t];
  const double lo = day.envelope.floor[t + 1];
  const double hi = std::min(b.capacity, day.envelope.ceiling[t + 1]);
  if (p.ev_at_home[t]) {
    s.b_in_min = std::max(0.0, lo - after_trip);
    if (s.b_in_min > b.max_charge + kTol)
      throw InfeasibleSchedule("infeasible EV schedule: reservation exceeds the charge rate at step " +
                               std::to_string(t));
    s.b_in_max = std::max(s.b_in_min, std::min(b.max_charge, hi - after_trip));
    s.b_out_min = std::max(0.0, after_trip - hi);
    s.b_out_max = std::max(s.b_out_min, std::min(b.capacity, after_trip - lo));
    if (s.b_in_min > 0.0) s.b_out_min = s.b_out_max = 0.0;
    if (s.b_out_min > 0.0) s.b_in_min = s.b_in_max = 0.0;
  } else if (after_trip < lo - kTol || after_trip > hi + kTol) {
    throw InfeasibleSchedule("infeasible EV schedule: battery outside the trip corridor at step " +
                             std::to_string(t));
  }

  s.due_load = day.fixed_share_at(t) + state.queue.due_at(t);
  s.deferrable_load = state.queue.deferrable_at(t);

  const auto hb = thermal::heating_bounds(day.params->kappa, state.thermal, p.external_temp[t], p.solar_gain[t],
                                          day.params->comfort.lower[t], day.params->comfort.upper[t]);
  s.h_min = hb.h_min;
  s.h_max = hb.h_max;
  s.comfort_feasible = hb.feasible;
  return s;
}

double import_of(const Decisions& d, double pv, const BatteryParams& b) {
  return d.consumption + d.heating + d.b_in / b.eta_charge - b.eta_discharge * d.b_out - pv;
}

Decisions map_action(double psi, const HouseholdState& state, const AgentDay& day) {
  if (!(psi >= 0.0 && psi <= 1.0)) throw std::invalid_argument("psi must lie in [0, 1]");
  const BatteryParams& b = day.params->battery;
  const FlexibilitySpans s = flexibility_spans(state, day);

  const double discharge = s.discharge_span(b);
  const double consume = s.consumption_span();
  const double charge = s.charge_span(b);
  const double u = psi * (discharge + consume + charge);

  Decisions d;
  d.b_out = s.b_out_min;
  d.b_in = s.b_in_min;
  double extra = 0.0;
  if (u < discharge) {
    d.b_out = std::clamp(s.b_out_max - u / b.eta_discharge, s.b_out_min, s.b_out_max);
  } else if (u <= discharge + consume) {
    extra = std::min(u - discharge, consume);
  } else {
    extra = consume;
    d.b_in = psi >= 1.0 ? s.b_in_max
                        : std::clamp(s.b_in_min + (u - discharge - consume) * b.eta_charge, s.b_in_min, s.b_in_max);
  }

  d.flexible = std::min(extra, s.deferrable_load);
  d.heating = s.h_min + std::max(0.0, extra - d.flexible);
  d.consumption = s.due_load + d.flexible;
  d.import = import_of(d, day.profile->pv_generation[state.step], b);
  return d;
}

std::vector<double> action_grid(int n_actions) {
  if (n_actions < 2) throw std::invalid_argument("action grid needs at least two actions");
  std::vector<double> psi(n_actions);
  for (int a = 0; a < n_actions; ++a) psi[a] = static_cast<double>(a) / (n_actions - 1);
  return psi;
}

HouseholdState step_household(const HouseholdState& state, const Decisions& d, const AgentDay& day) {
  const DayProfile& p = *day.profile;
  const BatteryParams& b = day.params->battery;
  const int t = state.step;
  require(t < static_cast<int>(p.horizon()), "stepping past the end of the day");
  require(d.b_in >= -kTol && d.b_out >= -kTol && d.heating >= -kTol && d.consumption >= -kTol &&
              d.flexible >= -kTol,
          "negative decision");
  const double mu = p.ev_at_home[t] ? 1.0 : 0.0;
  require(d.b_in <= mu * b.max_charge + kTol, "charge above the gated rate");
  require(d.b_out <= mu * b.capacity + kTol, "discharge while away");
  require(std::min(d.b_in, d.b_out) <= kTol, "simultaneous charge and discharge");
  const double due = day.fixed_share_at(t) + state.queue.due_at(t);
  require(std::abs(d.consumption - due - d.flexible) <= 1e-7, "consumption does not cover due loads");

  HouseholdState next;
  next.step = t + 1;
  next.battery = state.battery + d.b_in - d.b_out - p.ev_demand[t];
  require(next.battery >= day.envelope.floor[t + 1] - 1e-7 && next.battery <= day.envelope.ceiling[t + 1] + 1e-7,
          "battery leaves its corridor");
  next.thermal = thermal::step_thermal(day.params->kappa, state.thermal, p.external_temp[t], p.solar_gain[t],
                                       d.heating);

  double to_serve = d.flexible;
  for (const auto& e : state.queue.entries) {
    if (e.deadline <= t) continue;
    FlexEntry kept = e;
    const double used = std::min(kept.remaining, to_serve);
    kept.remaining -= used;
    to_serve -= used;
    if (kept.remaining > 1e-12) next.queue.entries.push_back(kept);
  }
  require(to_serve <= 1e-7, "flexible consumption exceeds deferred demand");
  if (next.step < static_cast<int>(p.horizon())) {
    const double flex = day.flexible_share_at(next.step);
    if (flex > 0.0) next.queue.entries.push_back({flex, next.step, day.deadline_for(next.step)});
  }
  return next;
}

RewardBreakdown step_system(const std::vector<Decisions>& decisions, const GridParams& grid, int step,
                            double depreciation) {
  RewardBreakdown r;
  double exports = 0.0, throughput = 0.0;
  for (const auto& d : decisions) {
    r.net_import += d.import;
    exports += std::max(-d.import, 0.0);
    throughput += d.b_in + d.b_out;
  }
  r.losses = grid.loss_coefficient() * r.net_import * r.net_import;
  r.grid = grid.cost[step] * (r.net_import + r.losses);
  r.emissions = grid.carbon_cost[step] / grid.cost[step] * r.grid;
  r.distribution = grid.distribution_charge * exports;
  r.storage = depreciation * throughput;
  return r;
}

DayRunner::DayRunner(std::vector<DayProfile> days, HouseholdParams params, GridParams grid)
    : profiles_(std::move(days)), params_(std::move(params)), grid_(std::move(grid)) {
  if (profiles_.empty()) throw std::invalid_argument("no agents");
  params_.battery.validate();
  horizon_ = static_cast<int>(profiles_.front().horizon());
  grid_.validate(profiles_.front().horizon());
  days_.reserve(profiles_.size());
  for (const auto& d : profiles_) {
    if (static_cast<int>(d.horizon()) != horizon_) throw std::invalid_argument("agents have different horizons");
    days_.emplace_back(d, params_);
    states_.push_back(days_.back().initial_state());
  }
}

std::vector<Decisions> DayRunner::decide(const std::vector<double>& psi) const {
  if (psi.size() != days_.size()) throw std::invalid_argument("one psi per agent expected");
  std::vector<Decisions> out(days_.size());
  for (std::size_t i = 0; i < days_.size(); ++i) out[i] = map_action(psi[i], states_[i], days_[i]);
  return out;
}

RewardBreakdown DayRunner::reward(const std::vector<Decisions>& decisions) const {
  return step_system(decisions, grid_, step_, params_.battery.depreciation);
}

RewardBreakdown DayRunner::counterfactual(const std::vector<Decisions>& decisions, std::size_t agent,
                                          double psi_default) const {
  std::vector<Decisions> alt = decisions;
  alt[agent] = map_action(psi_default, states_[agent], days_[agent]);
  return reward(alt);
}

void DayRunner::advance(const std::vector<Decisions>& decisions) {
  require(!done(), "day already finished");
  for (std::size_t i = 0; i < days_.size(); ++i) states_[i] = step_household(states_[i], decisions[i], days_[i]);
  ++step_;
}

RewardBreakdown baseline_day(const std::vector<DayProfile>& days, const HouseholdParams& params,
                             const GridParams& grid) {
  DayRunner runner(days, params, grid);
  return run_day(runner, [](std::size_t, int, const DayRunner&) { return 1.0; }).reward;
}

bool ConstraintReport::ok(double balance_tol, double tol) const {
  return max_balance_residual < balance_tol && max_battery_violation <= tol && max_gating_violation <= tol &&
         max_flex_violation <= tol && max_comfort_violation <= tol && max_terminal_violation <= tol &&
         max_negativity <= tol;
}

std::string ConstraintReport::describe() const {
  std::ostringstream os;
  os << "balance=" << max_balance_residual << " battery=" << max_battery_violation
     << " gating=" << max_gating_violation << " flex=" << max_flex_violation << " comfort=" << max_comfort_violation
     << " terminal=" << max_terminal_violation << " negativity=" << max_negativity;
  return os.str();
}

ConstraintReport check_day(const DayTrace& trace, const std::vector<DayProfile>& days,
                           const HouseholdParams& params) {
  ConstraintReport rep;
  const BatteryParams& b = params.battery;
  auto worst = [](double& slot, double v) { slot = std::max(slot, v); };

  for (std::size_t i = 0; i < trace.agents.size(); ++i) {
    const DayProfile& p = days[i];
    const int n = static_cast<int>(p.horizon());
    if (static_cast<int>(trace.agents[i].size()) != n) throw std::invalid_argument("trace does not cover the day");

    std::vector<double> required(n, 0.0);
    double total_demand = 0.0;
    for (int t = 0; t < n; ++t) {
      const double d = p.household_demand[t];
      total_demand += d;
      required[t] += (1.0 - params.flex.flexible_share) * d;
      const int deadline = std::min(t + std::max(params.flex.window, 0), n - 1);
      required[deadline] += params.flex.flexible_share * d;
    }

    double level = b.initial_level;
    thermal::ThermalState th = params.initial_thermal;
    double consumed = 0.0, demanded = 0.0, needed = 0.0;
    for (int t = 0; t < n; ++t) {
      const Decisions& d = trace.agents[i][t].decisions;
      const double mu = p.ev_at_home[t] ? 1.0 : 0.0;
      worst(rep.max_negativity, -std::min({d.b_in, d.b_out, d.heating, d.consumption, 0.0}));
      const double balance = d.consumption + d.heating + d.b_in / b.eta_charge - b.eta_discharge * d.b_out -
                             p.pv_generation[t];
      worst(rep.max_balance_residual, std::abs(d.import - balance));
      worst(rep.max_gating_violation, std::max(d.b_in - mu * b.max_charge, d.b_out - mu * b.capacity));

      worst(rep.max_battery_violation, mu * b.min_level - level);
      level += d.b_in - d.b_out - p.ev_demand[t];
      worst(rep.max_battery_violation, std::max(level - b.capacity, -level));
      if (t + 1 < n) worst(rep.max_battery_violation, (p.ev_at_home[t + 1] ? b.min_level : 0.0) - level);

      th = thermal::step_thermal(params.kappa, th, p.external_temp[t], p.solar_gain[t], d.heating);
      worst(rep.max_comfort_violation, std::max(params.comfort.lower[t] - th.air, th.air - params.comfort.upper[t]));

      consumed += d.consumption;
      demanded += p.household_demand[t];
      needed += required[t];
      worst(rep.max_flex_violation, std::max(needed - consumed, consumed - demanded));
    }
    worst(rep.max_terminal_violation, std::abs(level - b.initial_level));
    worst(rep.max_flex_violation, std::abs(consumed - total_demand));
  }
  return rep;
}

}  // namespace flexq::env
