#include "flexq/optimiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace flexq::optimiser {

namespace {

enum Family {
  kBatteryBalance,
  kTerminal,
  kThermal,
  kFlexDemand,
  kNetImport,
  kGating,
  kBatteryBounds,
  kComfort,
  kExports,
  kNonNegative,
  kFamilies
};

const std::vector<std::string> kFamilyNames{"battery balance", "terminal battery", "thermal dynamics",
                                            "flexible demand", "net import", "charge gating",
                                            "battery bounds", "comfort", "exports", "non-negativity"};

using Triplets = std::vector<Eigen::Triplet<double>>;

struct Rows {
  Triplets entries;
  std::vector<double> rhs;
  std::vector<int> family;

  int add(double value, Family f) {
    rhs.push_back(value);
    family.push_back(f);
    return static_cast<int>(rhs.size()) - 1;
  }
  void set(int row, int col, double v) { entries.emplace_back(row, col, v); }

  qp::SparseMatrix matrix(int cols) const {
    qp::SparseMatrix m(static_cast<Eigen::Index>(rhs.size()), cols);
    m.setFromTriplets(entries.begin(), entries.end());
    return m;
  }
  qp::Vector vector() const { return Eigen::Map<const qp::Vector>(rhs.data(), static_cast<Eigen::Index>(rhs.size())); }
};

double fixed_load(const env::HouseholdParams& hp, const DayProfile& d, int t) {
  return (1.0 - hp.flex.flexible_share) * d.household_demand[t];
}

int deadline(const env::HouseholdParams& hp, int t, int horizon) {
  return std::min(t + std::max(hp.flex.window, 0), horizon - 1);
}

}  // namespace

bool DayProblem::flexible(int demand_step, int consume_step) const {
  return params.flex.flexible_share > 0.0 && consume_step >= demand_step &&
         consume_step <= deadline(params, demand_step, horizon);
}

DayProblem build_problem(const std::vector<DayProfile>& profiles, const env::HouseholdParams& params,
                         const env::GridParams& grid) {
  if (profiles.empty()) throw std::invalid_argument("no agents");
  DayProblem pb;
  pb.profiles = profiles;
  pb.params = params;
  pb.grid = grid;
  pb.horizon = static_cast<int>(profiles.front().horizon());
  const int T = pb.horizon;
  params.battery.validate();
  grid.validate(profiles.front().horizon());
  const auto& b = params.battery;
  const auto& k = params.kappa;

  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& d = profiles[i];
    if (static_cast<int>(d.horizon()) != T) throw std::invalid_argument("agents have different horizons");
    d.validate();
    try {
      env::battery_envelope(d, b);
    } catch (const env::InfeasibleSchedule& e) {
      throw InfeasibleProblem(kFamilyNames[kBatteryBounds], "agent " + std::to_string(i) + ": " + e.what());
    }
    // Minimal heating gives the coolest trajectory, so an overshoot there cannot be avoided.
    thermal::ThermalState th = params.initial_thermal;
    for (int t = 0; t < T; ++t) {
      const auto hb = thermal::heating_bounds(k, th, d.external_temp[t], d.solar_gain[t], params.comfort.lower[t],
                                              params.comfort.upper[t]);
      if (!hb.feasible)
        throw InfeasibleProblem(kFamilyNames[kComfort],
                                "agent " + std::to_string(i) + " overheats at step " + std::to_string(t));
      th = thermal::step_thermal(k, th, d.external_temp[t], d.solar_gain[t], hb.h_min);
    }
  }

  int col = 0;
  for (const auto& d : profiles) {
    AgentIndex idx;
    for (int* field : {&idx.b_in, &idx.b_out, &idx.heating, &idx.exports, &idx.t_mass, &idx.t_air, &idx.battery}) {
      *field = col;
      col += T;
    }
    for (int td = 0; td < T; ++td) {
      if (!(params.flex.flexible_share * d.household_demand[td] > 0.0)) continue;
      for (int tc = td; tc <= deadline(params, td, T); ++tc) idx.flex.push_back({td, tc, col++});
    }
    pb.agents.push_back(std::move(idx));
  }
  pb.grid_column = col;
  col += T;
  const int n = col;

  qp::Vector q = qp::Vector::Zero(n);
  Triplets p_entries;
  const double loss = grid.loss_coefficient();
  for (int t = 0; t < T; ++t) {
    q[pb.grid_column + t] = grid.cost[t];
    p_entries.emplace_back(pb.grid_column + t, pb.grid_column + t, 2.0 * grid.cost[t] * loss);
  }

  Rows eq, ineq;
  std::vector<int> net_rows(T);
  for (int t = 0; t < T; ++t) {
    net_rows[t] = eq.add(0.0, kNetImport);
    eq.set(net_rows[t], pb.grid_column + t, 1.0);
  }

  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& d = profiles[i];
    const auto& idx = pb.agents[i];
    std::vector<std::vector<int>> consumed_at(T);
    for (const auto& f : idx.flex) consumed_at[f.consume_step].push_back(f.column);

    for (int t = 0; t < T; ++t) {
      const int bi = idx.b_in + t, bo = idx.b_out + t, h = idx.heating + t, x = idx.exports + t;
      const int tm = idx.t_mass + t, ta = idx.t_air + t, e = idx.battery + t;
      q[bi] = b.depreciation;
      q[bo] = b.depreciation;
      q[x] = grid.distribution_charge;

      // E[t+1] = E[t] + b_in - b_out - d_EV
      int r = eq.add(-d.ev_demand[t] + (t == 0 ? b.initial_level : 0.0), kBatteryBalance);
      eq.set(r, e, 1.0);
      if (t > 0) eq.set(r, e - 1, -1.0);
      eq.set(r, bi, -1.0);
      eq.set(r, bo, 1.0);

      // zero-width ranges become equalities so the interior stays non-empty
      auto bounded = [&](int column, double lo, double hi, Family f) {
        if (hi - lo <= 1e-12) {
          const int row = eq.add(lo, f);
          eq.set(row, column, 1.0);
          return;
        }
        int row = ineq.add(hi, f);
        ineq.set(row, column, 1.0);
        row = ineq.add(-lo, f == kGating ? kNonNegative : f);
        ineq.set(row, column, -1.0);
      };
      const double mu = d.ev_at_home[t] ? 1.0 : 0.0;
      bounded(bi, 0.0, mu * b.max_charge, kGating);
      bounded(bo, 0.0, mu * b.capacity, kGating);

      if (t + 1 < T) {
        bounded(e, d.ev_at_home[t + 1] ? b.min_level : 0.0, b.capacity, kBatteryBounds);
      } else {
        r = eq.add(b.initial_level, kTerminal);
        eq.set(r, e, 1.0);
      }

      // thermal recursion from the previous mass temperature
      const double exo_m = k.mass(0) + k.mass(2) * d.external_temp[t] + k.mass(3) * d.solar_gain[t];
      const double exo_a = k.air(0) + k.air(2) * d.external_temp[t] + k.air(3) * d.solar_gain[t];
      r = eq.add(exo_m + (t == 0 ? k.mass(1) * params.initial_thermal.mass : 0.0), kThermal);
      eq.set(r, tm, 1.0);
      if (t > 0) eq.set(r, tm - 1, -k.mass(1));
      eq.set(r, h, -k.mass(4));
      r = eq.add(exo_a + (t == 0 ? k.air(1) * params.initial_thermal.mass : 0.0), kThermal);
      eq.set(r, ta, 1.0);
      if (t > 0) eq.set(r, tm - 1, -k.air(1));
      eq.set(r, h, -k.air(4));

      bounded(ta, params.comfort.lower[t], params.comfort.upper[t], kComfort);

      r = ineq.add(0.0, kNonNegative);
      ineq.set(r, h, -1.0);
      r = ineq.add(0.0, kNonNegative);
      ineq.set(r, x, -1.0);

      // p = c + h + b_in / eta - eta b_out - pv, and x >= -p
      const double exogenous = fixed_load(params, d, t) - d.pv_generation[t];
      r = ineq.add(exogenous, kExports);
      ineq.set(r, x, -1.0);
      ineq.set(r, h, -1.0);
      ineq.set(r, bi, -1.0 / b.eta_charge);
      ineq.set(r, bo, b.eta_discharge);
      for (int c : consumed_at[t]) ineq.set(r, c, -1.0);

      eq.rhs[net_rows[t]] += exogenous;
      eq.set(net_rows[t], h, -1.0);
      eq.set(net_rows[t], bi, -1.0 / b.eta_charge);
      eq.set(net_rows[t], bo, b.eta_discharge);
      for (int c : consumed_at[t]) eq.set(net_rows[t], c, -1.0);
    }

    for (int td = 0; td < T; ++td) {
      const double demand = params.flex.flexible_share * d.household_demand[td];
      if (!(demand > 0.0)) continue;
      const int r = eq.add(demand, kFlexDemand);
      for (const auto& f : idx.flex)
        if (f.demand_step == td) eq.set(r, f.column, 1.0);
    }
    for (const auto& f : idx.flex) {
      const int r = ineq.add(0.0, kNonNegative);
      ineq.set(r, f.column, -1.0);
    }
  }

  pb.qp.P = qp::SparseMatrix(n, n);
  pb.qp.P.setFromTriplets(p_entries.begin(), p_entries.end());
  pb.qp.q = q;
  pb.qp.A = eq.matrix(n);
  pb.qp.b = eq.vector();
  pb.qp.G = ineq.matrix(n);
  pb.qp.h = ineq.vector();
  pb.qp.eq_family = eq.family;
  pb.qp.ineq_family = ineq.family;
  pb.qp.family_names = kFamilyNames;
  return pb;
}

env::Decisions AgentSchedule::decisions(int step, double due_load) const {
  env::Decisions d;
  d.b_in = b_in[step];
  d.b_out = b_out[step];
  d.heating = heating[step];
  d.consumption = consumption[step];
  d.flexible = std::max(0.0, consumption[step] - due_load);
  d.import = import[step];
  return d;
}

OptimalSchedule solve_day(const DayProblem& pb, const qp::Settings& settings) {
  const auto sol = qp::solve(pb.qp, settings);
  const int T = pb.horizon;
  const auto& b = pb.params.battery;
  const auto& x = sol.x;
  OptimalSchedule out;
  out.iterations = sol.iterations;
  out.residuals = qp::kkt_residuals(pb.qp, sol);
  out.objective = -sol.objective;
  out.net_import.resize(T);
  for (int t = 0; t < T; ++t) out.net_import[t] = x[pb.grid_column + t];

  for (std::size_t i = 0; i < pb.agents.size(); ++i) {
    const auto& idx = pb.agents[i];
    const auto& d = pb.profiles[i];
    AgentSchedule s;
    s.partial.assign(T, std::vector<double>(T, 0.0));
    for (const auto& f : idx.flex) s.partial[f.demand_step][f.consume_step] = x[f.column];
    s.battery.push_back(b.initial_level);
    s.t_mass.push_back(pb.params.initial_thermal.mass);
    s.t_air.push_back(pb.params.initial_thermal.air);
    for (int t = 0; t < T; ++t) {
      s.b_in.push_back(x[idx.b_in + t]);
      s.b_out.push_back(x[idx.b_out + t]);
      s.heating.push_back(x[idx.heating + t]);
      s.exports.push_back(x[idx.exports + t]);
      double c = fixed_load(pb.params, d, t);
      for (int td = 0; td <= t; ++td) c += s.partial[td][t];
      s.consumption.push_back(c);
      s.import.push_back(c + s.heating[t] + s.b_in[t] / b.eta_charge - b.eta_discharge * s.b_out[t] -
                         d.pv_generation[t]);
      s.battery.push_back(x[idx.battery + t]);
      s.t_mass.push_back(x[idx.t_mass + t]);
      s.t_air.push_back(x[idx.t_air + t]);
    }
    out.agents.push_back(std::move(s));
  }

  std::vector<env::Decisions> step(pb.agents.size());
  for (int t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < pb.agents.size(); ++i) step[i] = out.agents[i].decisions(t, 0.0);
    out.step_rewards.push_back(env::step_system(step, pb.grid, t, b.depreciation));
    out.reward += out.step_rewards.back();
  }
  return out;
}

env::HouseholdState schedule_state(const DayProblem& pb, const OptimalSchedule& sched, std::size_t agent, int step) {
  const auto& s = sched.agents[agent];
  const auto& d = pb.profiles[agent];
  const auto envelope = env::battery_envelope(d, pb.params.battery);
  env::HouseholdState st;
  st.step = step;
  st.battery = std::clamp(s.battery[step], envelope.floor[step], envelope.ceiling[step]);
  st.thermal = {s.t_mass[step], s.t_air[step]};
  for (int td = 0; td <= step; ++td) {
    const int dl = deadline(pb.params, td, pb.horizon);
    if (dl < step) continue;
    double remaining = pb.params.flex.flexible_share * d.household_demand[td];
    for (int tc = td; tc < step; ++tc) remaining -= s.partial[td][tc];
    if (remaining > 1e-12) st.queue.entries.push_back({remaining, td, dl});
  }
  return st;
}

env::DayTrace schedule_trace(const DayProblem& pb, const OptimalSchedule& sched) {
  env::DayTrace trace;
  trace.agents.resize(pb.agents.size());
  for (std::size_t i = 0; i < pb.agents.size(); ++i) {
    for (int t = 0; t < pb.horizon; ++t) {
      auto st = schedule_state(pb, sched, i, t);
      const double due = fixed_load(pb.params, pb.profiles[i], t) + st.queue.due_at(t);
      trace.agents[i].push_back({st, sched.agents[i].decisions(t, due)});
    }
    env::HouseholdState last;
    last.step = pb.horizon;
    last.battery = sched.agents[i].battery.back();
    last.thermal = {sched.agents[i].t_mass.back(), sched.agents[i].t_air.back()};
    trace.final_states.push_back(last);
  }
  trace.reward = sched.reward;
  return trace;
}

int nearest_action(const env::Decisions& target, const env::HouseholdState& state, const env::AgentDay& day,
                   const std::vector<double>& action_grid) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int a = 0; a < static_cast<int>(action_grid.size()); ++a) {
    const auto d = env::map_action(action_grid[a], state, day);
    const double dist = std::abs(d.b_in - target.b_in) + std::abs(d.b_out - target.b_out) +
                        std::abs(d.heating - target.heating) + std::abs(d.consumption - target.consumption);
    if (dist < best_d) {
      best_d = dist;
      best = a;
    }
  }
  return best;
}

std::vector<ExperienceTuple> extract_experience(const DayProblem& pb, const OptimalSchedule& sched,
                                                const std::vector<int>& states,
                                                const std::vector<double>& action_grid, bool with_marginal) {
  const int T = pb.horizon;
  if (static_cast<int>(states.size()) != T) throw std::invalid_argument("one state per step expected");
  const std::size_t n = pb.agents.size();
  std::vector<env::AgentDay> days;
  days.reserve(n);
  for (const auto& p : pb.profiles) days.emplace_back(p, pb.params);

  std::vector<std::vector<env::Decisions>> scheduled(T, std::vector<env::Decisions>(n));
  for (int t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i) scheduled[t][i] = sched.agents[i].decisions(t, 0.0);

  std::vector<ExperienceTuple> out;
  out.reserve(n * T);
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      const auto st = schedule_state(pb, sched, i, t);
      ExperienceTuple e;
      e.agent = static_cast<int>(i);
      e.step = t;
      e.state = states[t];
      e.action = nearest_action(scheduled[t][i], st, days[i], action_grid);
      e.r_total = sched.step_rewards[t].total();
      if (with_marginal) {
        auto alt = scheduled[t];
        alt[i] = env::map_action(1.0, st, days[i]);
        e.r_marginal = e.r_total - env::step_system(alt, pb.grid, t, pb.params.battery.depreciation).total();
        e.has_marginal = true;
      }
      e.terminal = t + 1 == T;
      e.from_optimiser = true;
      e.next_state = e.terminal ? states[t] : states[t + 1];
      out.push_back(e);
    }
  }
  return out;
}

void write_schedule_csv(std::ostream& out, const DayProblem& pb, const OptimalSchedule& sched) {
  out << "agent,step,b_in,b_out,heating,consumption,import,export,battery,t_mass,t_air,net_import\n";
  char buf[512];
  for (std::size_t i = 0; i < sched.agents.size(); ++i) {
    const auto& s = sched.agents[i];
    for (int t = 0; t < pb.horizon; ++t) {
      std::snprintf(buf, sizeof buf, "%zu,%d,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", i, t, s.b_in[t],
                    s.b_out[t], s.heating[t], s.consumption[t], s.import[t], s.exports[t], s.battery[t + 1],
                    s.t_mass[t + 1], s.t_air[t + 1], sched.net_import[t]);
      out << buf;
    }
  }
}

}  // namespace flexq::optimiser
