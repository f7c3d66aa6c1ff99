#pragma once

namespace flexq {

/// One learning transition of one agent.
struct ExperienceTuple {
  int agent = 0;
  int step = 0;
  int state = 0;
  int action = 0;
  double r_total = 0.0;
  double r_marginal = 0.0;
  bool has_marginal = false;
  int next_state = 0;
  bool terminal = false;  // last step of the day, no bootstrap
  bool from_optimiser = false;
};

}  // namespace flexq
