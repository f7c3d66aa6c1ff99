#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flexq/config.hpp"
#include "flexq/marl.hpp"

namespace flexq::harness {

/// One (strategy, agent count, repetition) run of the matrix.
struct Cell {
  std::string strategy;
  int agents = 1;
  int repetition = 0;
};

struct ResultRow {
  std::string strategy;
  int repetition = 0;
  int epoch = 0;
  int agents = 0;
  double savings = 0.0;  // p per agent-hour
  double grid = 0.0;
  double distribution = 0.0;
  double storage = 0.0;
  double emissions = 0.0;
  double upper_bound = 0.0;
  bool has_upper_bound = false;
};

struct CellResult {
  Cell cell;
  bool ok = false;
  std::string error;
  std::vector<ResultRow> rows;
  std::vector<marl::QTable> policies;
  double final_mean = 0.0;
  std::size_t tuples = 0;
  env::ConstraintReport worst_constraints;  // elementwise maximum over evaluated days
};

struct AggregateRow {
  std::string strategy;
  int agents = 0;
  int repetitions = 0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

struct ResultsTable {
  std::vector<CellResult> cells;  // matrix order
  std::vector<AggregateRow> aggregates;

  std::vector<ResultRow> rows() const;
  std::size_t failures() const;
};

enum class Execution { serial, parallel };

/// Matrix cells in output order: strategy, then agent count, then repetition.
std::vector<Cell> matrix_cells(const ScenarioConfig& config);

/// Seeds derived from the config seed. Scenario data depend on (agents, repetition) only, so every
/// strategy sees the same days.
std::uint64_t data_seed(const ScenarioConfig& config, int agents, int repetition);
std::uint64_t action_seed(const ScenarioConfig& config, const Cell& cell);

CellResult run_cell(const ScenarioConfig& config, const scenario::ScenarioSetup& setup, const Cell& cell);

/// Trains every cell. Failures are recorded and the rest of the matrix continues.
ResultsTable run_matrix(const ScenarioConfig& config, Execution mode = Execution::parallel);
ResultsTable run_matrix(const ScenarioConfig& config, const scenario::ScenarioSetup& setup, Execution mode);

/// Linear interpolation between order statistics, q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Median and quartiles of the final-10-epoch means per (strategy, agent count).
std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells, int final_epochs = 10);

/// Savings split by component. Shares are signed percentages of the net saving; with no net saving
/// the components are reported in pence per agent-hour instead.
struct BreakdownRow {
  std::string strategy;
  int agents = 0;
  double net = 0.0;
  double battery = 0.0;
  double distribution = 0.0;
  double energy = 0.0;     // grid cost without emissions
  double emissions = 0.0;
  bool percent = true;
};

BreakdownRow breakdown_shares(double battery, double distribution, double energy, double emissions);
std::vector<BreakdownRow> cost_breakdown_report(const ResultsTable& results, int final_epochs = 10);

void write_results_csv(std::ostream& out, const ResultsTable& results);
void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows);
void write_breakdown_csv(std::ostream& out, const std::vector<BreakdownRow>& rows);
/// Five-epoch moving average per (strategy, agent count, epoch): median and quartiles over repetitions.
void write_curves_csv(std::ostream& out, const ResultsTable& results, int window = 5);
void write_policy_csv(std::ostream& out, const std::vector<marl::QTable>& tables);

/// Writes results.csv, aggregates.csv, curves.csv, breakdown.csv, failures.csv, policies/ and schedules/.
void write_outputs(const std::string& dir, const ScenarioConfig& config, const scenario::ScenarioSetup& setup,
                   const ResultsTable& results);

/// Solves the first training day of (agents, repetition) and writes its schedule.
void dump_schedule(std::ostream& out, const ScenarioConfig& config, const scenario::ScenarioSetup& setup,
                   int agents, int repetition);

}  // namespace flexq::harness
