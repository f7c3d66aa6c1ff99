#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "flexq/env.hpp"
#include "flexq/household_source.hpp"
#include "flexq/marl.hpp"
#include "flexq/profiles.hpp"
#include "flexq/thermal.hpp"

namespace flexq::harness {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error("config: " + what) {}
};

struct BatteryConfig {
  double capacity = 75.0;                 // kWh
  double max_charge = 22.0;               // kW
  double round_trip_efficiency = 0.87;    // split evenly between charge and discharge
  double depreciation_usd_per_mwh = 20.0;
  double usd_to_gbp = 0.78;               // absolute savings scale with this rate
  double initial_fraction = 0.5;
  double min_fraction = 0.1;
};

struct GridConfig {
  double voltage = 415.0;
  double resistance = 0.084;
  double distribution_charge = 0.01;   // £/kWh exported
  double scc_gbp_per_tonne = 70.0;
};

/// Price and intensity source: "two_level" built-in or "csv" with header hour,price,intensity.
struct SeriesConfig {
  std::string source = "two_level";
  std::string path;
  double off_peak_price = 0.10;        // £/kWh
  double peak_price = 0.25;
  int peak_start = 16;                 // peak hours [start, end)
  int peak_end = 19;
  double intensity = 0.2;              // kgCO2/kWh
  double intensity_amplitude = 0.05;   // evening-peaking daily swing
  double intensity_noise = 0.05;       // relative day-to-day spread
};

struct ComfortConfig {
  double target = 20.0;
  double setback = 16.0;
  double band = 3.0;
  std::vector<std::pair<int, int>> windows{{7, 10}, {17, 22}};
  double initial_temperature = 17.0;   // air and mass at the start of each day
};

/// Profile source: "synthetic" or "csv" (one file per component, fitted on load).
struct ProfileConfig {
  std::string source = "synthetic";
  std::string load_csv, ev_csv, pv_csv;
  int clusters = 4;
  std::uint64_t seed = 2020;
  profiles::SyntheticConfig synthetic;
};

struct ScenarioConfig {
  std::vector<int> agents{1, 3, 5, 10};
  std::vector<std::string> strategies{"TE", "ME", "AE", "TO", "MO", "AO", "CO"};
  std::uint64_t seed = 0;
  int workers = 1;
  bool upper_bound = false;
  bool dump_policies = true;
  bool dump_schedules = true;
  int horizon = kHoursPerDay;

  marl::LearningParams learning;
  BatteryConfig battery;
  GridConfig grid;
  SeriesConfig series;
  env::FlexParams flex;
  ComfortConfig comfort;
  thermal::BuildingParams building;
  ProfileConfig profiles;

  void validate() const;
};

ScenarioConfig parse_config(std::istream& in);
ScenarioConfig load_config(const std::string& path);
/// Full configuration with every default spelled out.
std::string dump_config(const ScenarioConfig& config);

scenario::PriceSeries load_series(const ScenarioConfig& config);
env::HouseholdParams household_params(const ScenarioConfig& config);
env::GridParams grid_params(const ScenarioConfig& config);
/// Everything a household scenario needs; fits or generates the profile models.
scenario::ScenarioSetup make_setup(const ScenarioConfig& config);

}  // namespace flexq::harness
