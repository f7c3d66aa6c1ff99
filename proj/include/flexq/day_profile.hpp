#pragma once

#include <cstddef>
#include <vector>

namespace flexq {

inline constexpr int kHoursPerDay = 24;

/// Exogenous inputs of one household for one day, one entry per step.
struct DayProfile {
  std::vector<double> ev_demand;         // kWh drawn by trips during the step
  std::vector<bool> ev_at_home;          // plugged in during the step
  std::vector<double> household_demand;  // kWh
  std::vector<double> pv_generation;     // kWh
  std::vector<double> external_temp;     // °C
  std::vector<double> solar_gain;        // W

  std::size_t horizon() const { return household_demand.size(); }

  /// Zero-filled profile with the car at home all day.
  static DayProfile flat(std::size_t horizon, double demand = 0.0, double temp = 5.0);

  /// Throws std::invalid_argument on length mismatch, negative energy, or a trip while plugged in.
  void validate() const;
};

}  // namespace flexq
