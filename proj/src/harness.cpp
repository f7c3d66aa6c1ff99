#include "flexq/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include "flexq/household_source.hpp"
#include "flexq/optimiser.hpp"

namespace flexq::harness {

namespace {

std::uint64_t mix(std::initializer_list<std::uint32_t> words) {
  std::seed_seq seq(words);
  std::mt19937_64 g(seq);
  return g();
}

std::uint32_t fnv1a(const std::string& s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) h = (h ^ c) * 16777619u;
  return h;
}

void worst_of(env::ConstraintReport& acc, const env::ConstraintReport& r) {
  acc.max_balance_residual = std::max(acc.max_balance_residual, r.max_balance_residual);
  acc.max_battery_violation = std::max(acc.max_battery_violation, r.max_battery_violation);
  acc.max_gating_violation = std::max(acc.max_gating_violation, r.max_gating_violation);
  acc.max_flex_violation = std::max(acc.max_flex_violation, r.max_flex_violation);
  acc.max_comfort_violation = std::max(acc.max_comfort_violation, r.max_comfort_violation);
  acc.max_terminal_violation = std::max(acc.max_terminal_violation, r.max_terminal_violation);
  acc.max_negativity = std::max(acc.max_negativity, r.max_negativity);
}

std::string line(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string line(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

std::ofstream open(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

using Key = std::pair<std::string, int>;

/// Groups successful cells by (strategy, agents) keeping matrix order of first appearance.
std::vector<std::pair<Key, std::vector<const CellResult*>>> groups(const std::vector<CellResult>& cells) {
  std::vector<std::pair<Key, std::vector<const CellResult*>>> out;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    const Key k{c.cell.strategy, c.cell.agents};
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& g) { return g.first == k; });
    if (it == out.end()) {
      out.push_back({k, {}});
      it = std::prev(out.end());
    }
    it->second.push_back(&c);
  }
  return out;
}

}  // namespace

std::vector<ResultRow> ResultsTable::rows() const {
  std::vector<ResultRow> out;
  for (const auto& c : cells) out.insert(out.end(), c.rows.begin(), c.rows.end());
  return out;
}

std::size_t ResultsTable::failures() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.ok; }));
}

std::vector<Cell> matrix_cells(const ScenarioConfig& config) {
  std::vector<Cell> out;
  for (const auto& s : config.strategies)
    for (int n : config.agents)
      for (int r = 0; r < config.learning.repetitions; ++r) out.push_back({s, n, r});
  return out;
}

std::uint64_t data_seed(const ScenarioConfig& config, int agents, int repetition) {
  return mix({static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
              static_cast<std::uint32_t>(agents), static_cast<std::uint32_t>(repetition), 0x64617461u});
}

std::uint64_t action_seed(const ScenarioConfig& config, const Cell& cell) {
  return mix({static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
              static_cast<std::uint32_t>(cell.agents), static_cast<std::uint32_t>(cell.repetition),
              fnv1a(cell.strategy)});
}

CellResult run_cell(const ScenarioConfig& config, const scenario::ScenarioSetup& setup, const Cell& cell) {
  CellResult res;
  res.cell = cell;
  try {
    const auto strategy = marl::StrategyConfig::parse(cell.strategy);
    scenario::HouseholdScenario source(setup, cell.agents, data_seed(config, cell.agents, cell.repetition),
                                       config.learning.states, config.learning.actions);
    marl::Rng rng(action_seed(config, cell));
    const auto tr = marl::train(strategy, config.learning, source, rng);
    for (const auto& e : tr.epochs) {
      const auto& ev = e.evaluation;
      res.rows.push_back({cell.strategy, cell.repetition, e.epoch, cell.agents, ev.savings, ev.grid, ev.distribution,
                          ev.storage, ev.emissions, ev.upper_bound, ev.has_upper_bound});
      res.tuples += e.tuples;
      worst_of(res.worst_constraints, ev.constraints);
    }
    for (std::size_t k = 0; k < tr.learner.tables(); ++k) res.policies.push_back(tr.learner.policy_table(k));
    res.final_mean = tr.final_mean(10);
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
    res.rows.clear();
  }
  return res;
}

ResultsTable run_matrix(const ScenarioConfig& config, Execution mode) {
  return run_matrix(config, make_setup(config), mode);
}

ResultsTable run_matrix(const ScenarioConfig& config, const scenario::ScenarioSetup& setup, Execution mode) {
  const auto cells = matrix_cells(config);
  ResultsTable table;
  table.cells.resize(cells.size());
  const long n = static_cast<long>(cells.size());
  if (mode == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(config.workers)
    for (long k = 0; k < n; ++k) table.cells[k] = run_cell(config, setup, cells[k]);
  } else {
    for (long k = 0; k < n; ++k) table.cells[k] = run_cell(config, setup, cells[k]);
  }
  table.aggregates = aggregate(table.cells);
  return table;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells, int final_epochs) {
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups(cells)) {
    std::vector<double> means;
    for (const auto* c : members) {
      const std::size_t n = std::min(c->rows.size(), static_cast<std::size_t>(final_epochs));
      if (n == 0) continue;
      double sum = 0.0;
      for (std::size_t k = c->rows.size() - n; k < c->rows.size(); ++k) sum += c->rows[k].savings;
      means.push_back(sum / static_cast<double>(n));
    }
    if (means.empty()) continue;
    out.push_back({key.first, key.second, static_cast<int>(means.size()), percentile(means, 0.5),
                   percentile(means, 0.25), percentile(means, 0.75)});
  }
  return out;
}

BreakdownRow breakdown_shares(double battery, double distribution, double energy, double emissions) {
  BreakdownRow b;
  b.net = battery + distribution + energy + emissions;
  if (std::abs(b.net) < 1e-12) {
    b.percent = false;
    b.battery = battery;
    b.distribution = distribution;
    b.energy = energy;
    b.emissions = emissions;
    return b;
  }
  b.battery = 100.0 * battery / b.net;
  b.distribution = 100.0 * distribution / b.net;
  b.energy = 100.0 * energy / b.net;
  b.emissions = 100.0 * emissions / b.net;
  return b;
}

std::vector<BreakdownRow> cost_breakdown_report(const ResultsTable& results, int final_epochs) {
  std::vector<BreakdownRow> out;
  for (const auto& [key, members] : groups(results.cells)) {
    double battery = 0.0, distribution = 0.0, energy = 0.0, emissions = 0.0;
    std::size_t count = 0;
    for (const auto* c : members) {
      const std::size_t n = std::min(c->rows.size(), static_cast<std::size_t>(final_epochs));
      for (std::size_t k = c->rows.size() - n; k < c->rows.size(); ++k) {
        const auto& r = c->rows[k];
        battery += r.storage;
        distribution += r.distribution;
        energy += r.grid - r.emissions;
        emissions += r.emissions;
        ++count;
      }
    }
    if (count == 0) continue;
    const double m = 1.0 / static_cast<double>(count);
    auto row = breakdown_shares(battery * m, distribution * m, energy * m, emissions * m);
    row.strategy = key.first;
    row.agents = key.second;
    out.push_back(row);
  }
  return out;
}

void write_results_csv(std::ostream& out, const ResultsTable& results) {
  out << "strategy,repetition,epoch,n_agents,savings_p_per_agent_hour,cg_delta,cd_delta,cs_delta,emissions_delta\n";
  for (const auto& r : results.rows())
    out << line("%s,%d,%d,%d,%.9f,%.9f,%.9f,%.9f,%.9f\n", r.strategy.c_str(), r.repetition, r.epoch, r.agents,
                r.savings, r.grid, r.distribution, r.storage, r.emissions);
}

void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "strategy,n_agents,repetitions,median,p25,p75\n";
  for (const auto& a : rows)
    out << line("%s,%d,%d,%.9f,%.9f,%.9f\n", a.strategy.c_str(), a.agents, a.repetitions, a.median, a.p25, a.p75);
}

void write_breakdown_csv(std::ostream& out, const std::vector<BreakdownRow>& rows) {
  out << "strategy,n_agents,net_savings,unit,battery,distribution,grid_energy,emissions\n";
  for (const auto& b : rows)
    out << line("%s,%d,%.9f,%s,%.6f,%.6f,%.6f,%.6f\n", b.strategy.c_str(), b.agents, b.net,
                b.percent ? "percent" : "p_per_agent_hour", b.battery, b.distribution, b.energy, b.emissions);
}

void write_curves_csv(std::ostream& out, const ResultsTable& results, int window) {
  out << "strategy,n_agents,epoch,median,p25,p75\n";
  for (const auto& [key, members] : groups(results.cells)) {
    const std::size_t epochs = members.front()->rows.size();
    for (std::size_t e = 0; e < epochs; ++e) {
      std::vector<double> smoothed;
      for (const auto* c : members) {
        const std::size_t from = e + 1 >= static_cast<std::size_t>(window) ? e + 1 - window : 0;
        double sum = 0.0;
        for (std::size_t k = from; k <= e; ++k) sum += c->rows[k].savings;
        smoothed.push_back(sum / static_cast<double>(e - from + 1));
      }
      out << line("%s,%d,%zu,%.9f,%.9f,%.9f\n", key.first.c_str(), key.second, e, percentile(smoothed, 0.5),
                  percentile(smoothed, 0.25), percentile(smoothed, 0.75));
    }
  }
}

void write_policy_csv(std::ostream& out, const std::vector<marl::QTable>& tables) {
  out << "table,state,action,q,visits\n";
  for (std::size_t k = 0; k < tables.size(); ++k)
    for (int s = 0; s < tables[k].states(); ++s)
      for (int a = 0; a < tables[k].actions(); ++a)
        out << line("%zu,%d,%d,%.12g,%lld\n", k, s, a, tables[k](s, a),
                    static_cast<long long>(tables[k].visits(s, a)));
}

void write_outputs(const std::string& dir, const ScenarioConfig& config, const scenario::ScenarioSetup& setup,
                   const ResultsTable& results) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);
  {
    auto out = open(root / "results.csv");
    write_results_csv(out, results);
  }
  {
    auto out = open(root / "aggregates.csv");
    write_aggregates_csv(out, results.aggregates);
  }
  {
    auto out = open(root / "curves.csv");
    write_curves_csv(out, results);
  }
  {
    auto out = open(root / "breakdown.csv");
    write_breakdown_csv(out, cost_breakdown_report(results));
  }
  if (results.failures() > 0) {
    auto out = open(root / "failures.csv");
    out << "strategy,n_agents,repetition,error\n";
    for (const auto& c : results.cells)
      if (!c.ok) out << c.cell.strategy << ',' << c.cell.agents << ',' << c.cell.repetition << ",\"" << c.error << "\"\n";
  }
  if (config.upper_bound) {
    auto out = open(root / "upper_bound.csv");
    out << "strategy,repetition,epoch,n_agents,upper_bound_p_per_agent_hour\n";
    for (const auto& r : results.rows())
      if (r.has_upper_bound)
        out << line("%s,%d,%d,%d,%.9f\n", r.strategy.c_str(), r.repetition, r.epoch, r.agents, r.upper_bound);
  }
  if (config.dump_policies) {
    fs::create_directories(root / "policies");
    for (const auto& c : results.cells) {
      if (!c.ok) continue;
      auto out = open(root / "policies" /
                      line("%s_n%d_r%d.csv", c.cell.strategy.c_str(), c.cell.agents, c.cell.repetition));
      write_policy_csv(out, c.policies);
    }
  }
  if (config.dump_schedules) {
    fs::create_directories(root / "schedules");
    for (int n : config.agents) {
      auto out = open(root / "schedules" / line("n%d_r0.csv", n));
      try {
        dump_schedule(out, config, setup, n, 0);
      } catch (const std::exception& e) {
        std::cerr << "schedule dump for " << n << " agents failed: " << e.what() << "\n";
      }
    }
  }
}

void dump_schedule(std::ostream& out, const ScenarioConfig& config, const scenario::ScenarioSetup& setup, int agents,
                   int repetition) {
  scenario::HouseholdScenario source(setup, agents, data_seed(config, agents, repetition), config.learning.states,
                                     config.learning.actions);
  const auto day = source.next_training_day(true);
  optimiser::write_schedule_csv(out, *day.problem, *day.schedule);
}

}  // namespace flexq::harness
