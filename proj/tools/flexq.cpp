#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "flexq/config.hpp"
#include "flexq/harness.hpp"

using namespace flexq;

namespace {

harness::ScenarioConfig read_config(const std::string& path) {
  return path.empty() ? harness::ScenarioConfig{} : harness::load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Household flexibility coordination with tabular multi-agent Q-learning"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", schedule_out;
  std::uint64_t seed = 0;
  std::vector<std::string> strategies;
  std::vector<int> agents;
  int workers = 0, repetition = 0, schedule_agents = 1;
  bool serial = false, print_defaults = false;

  auto* run = app.add_subcommand("run", "train every (strategy, agents, repetition) cell and write results");
  run->add_option("--config", config_path, "JSON scenario file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "base seed");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--strategies", strategies, "e.g. TE,MO or MO_c")->delimiter(',');
  run->add_option("--agents", agents, "e.g. 1,5,10")->delimiter(',');
  run->add_option("--workers", workers, "parallel cells")->check(CLI::PositiveNumber);
  run->add_flag("--serial", serial, "run the matrix without OpenMP");

  auto* validate = app.add_subcommand("validate-config", "check a scenario file and print it with defaults");
  validate->add_option("--config", config_path, "JSON scenario file")->check(CLI::ExistingFile);
  validate->add_flag("--print", print_defaults, "print the resolved configuration");

  auto* dump = app.add_subcommand("dump-schedule", "solve one omniscient training day and write its schedule");
  dump->add_option("--config", config_path, "JSON scenario file")->check(CLI::ExistingFile);
  auto* dump_seed = dump->add_option("--seed", seed, "base seed");
  dump->add_option("--agents", schedule_agents, "number of households")->check(CLI::PositiveNumber);
  dump->add_option("--repetition", repetition, "repetition index")->check(CLI::NonNegativeNumber);
  dump->add_option("--out", schedule_out, "CSV file, standard output when omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    auto config = read_config(config_path);
    if (*validate) {
      if (print_defaults) std::cout << harness::dump_config(config);
      std::printf("config ok: %zu strategies, %zu agent counts, %d repetitions, %d epochs\n",
                  config.strategies.size(), config.agents.size(), config.learning.repetitions,
                  config.learning.epochs);
      return 0;
    }
    if (*dump) {
      if (*dump_seed) config.seed = seed;
      const auto setup = harness::make_setup(config);
      if (schedule_out.empty()) {
        harness::dump_schedule(std::cout, config, setup, schedule_agents, repetition);
      } else {
        std::ofstream out(schedule_out);
        if (!out) throw std::runtime_error("cannot write " + schedule_out);
        harness::dump_schedule(out, config, setup, schedule_agents, repetition);
      }
      return 0;
    }
    if (*seed_opt) config.seed = seed;
    if (!strategies.empty()) config.strategies = strategies;
    if (!agents.empty()) config.agents = agents;
    if (workers > 0) config.workers = workers;
    config.validate();

    const auto start = std::chrono::steady_clock::now();
    const auto setup = harness::make_setup(config);
    const auto cells = harness::matrix_cells(config);
    std::printf("running %zu cells on %d worker(s)\n", cells.size(), config.workers);
    const auto results =
        harness::run_matrix(config, setup, serial ? harness::Execution::serial : harness::Execution::parallel);
    harness::write_outputs(out_dir, config, setup, results);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::printf("%-6s %8s %12s %12s %12s\n", "strat", "agents", "median", "p25", "p75");
    for (const auto& a : results.aggregates)
      std::printf("%-6s %8d %12.4f %12.4f %12.4f\n", a.strategy.c_str(), a.agents, a.median, a.p25, a.p75);
    for (const auto& c : results.cells)
      if (!c.ok)
        std::fprintf(stderr, "failed %s n=%d r=%d: %s\n", c.cell.strategy.c_str(), c.cell.agents,
                     c.cell.repetition, c.error.c_str());
    std::printf("wrote %s in %.1f s, %zu failed cell(s)\n", out_dir.c_str(), secs, results.failures());
    return results.failures() == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
