#include "flexq/day_profile.hpp"

#include <cmath>
#include <stdexcept>

namespace flexq {

DayProfile DayProfile::flat(std::size_t horizon, double demand, double temp) {
  DayProfile d;
  d.ev_demand.assign(horizon, 0.0);
  d.ev_at_home.assign(horizon, true);
  d.household_demand.assign(horizon, demand);
  d.pv_generation.assign(horizon, 0.0);
  d.external_temp.assign(horizon, temp);
  d.solar_gain.assign(horizon, 0.0);
  return d;
}

void DayProfile::validate() const {
  const std::size_t n = horizon();
  if (n == 0) throw std::invalid_argument("day profile is empty");
  if (ev_demand.size() != n || ev_at_home.size() != n || pv_generation.size() != n ||
      external_temp.size() != n || solar_gain.size() != n)
    throw std::invalid_argument("day profile series lengths differ");
  for (std::size_t t = 0; t < n; ++t) {
    if (!(ev_demand[t] >= 0.0) || !(household_demand[t] >= 0.0) || !(pv_generation[t] >= 0.0))
      throw std::invalid_argument("negative or non-finite energy at step " + std::to_string(t));
    if (!std::isfinite(external_temp[t]) || !std::isfinite(solar_gain[t]))
      throw std::invalid_argument("non-finite weather at step " + std::to_string(t));
    if (ev_demand[t] > 0.0 && ev_at_home[t])
      throw std::invalid_argument("EV consumes energy while plugged in at step " + std::to_string(t));
  }
}

}  // namespace flexq
