#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace flexq::thermal {

/// Single-zone building description for the simple hourly resistance-capacitance model.
/// Defaults describe a 76 m² one-storey old-build house.
struct BuildingParams {
  double floor_area = 76.0;          // A_f [m²]
  double room_height = 2.4;          // [m]
  double window_area = 1.4 * 1.4;    // one window [m²]
  int window_count = 8;              // windows subtracted from the wall area
  double door_area = 1.4 * 2.0;      // [m²]
  double u_ground = 1.0;             // [W/m²K]
  double u_roof = 1.0;
  double u_wall = 1.5;
  double u_window = 4.3;
  double shielding = 0.03;           // e
  double n_min = 0.5;                // [1/h]
  double n_50 = 6.0;                 // [1/h]
  double party_floor_fraction = 0.5; // k_party
  double height_correction = 1.0;    // epsilon
  double area_ratio = 4.5;           // Lambda_at
  double h_is = 3.45;                // [W/m²K]
  double h_ms = 9.1;                 // [W/m²K]
  double step_seconds = 3600.0;      // tau
  double heat_capacity_per_area = 165000.0;  // medium class [J/K per m² floor]
  double mass_area_factor = 2.5;             // A_m = factor * A_f

  void validate() const;
};

class DegenerateBuilding : public std::runtime_error {
 public:
  explicit DegenerateBuilding(const std::string& what)
      : std::runtime_error("degenerate building: " + what) {}
};

/// Affine two-node recursion [T_m', T_air'] = kappa * [1, T_m, T_e, phi, h].
/// Row 0 advances the building mass, row 1 gives the indoor air temperature.
/// The heating column expects h in kWh per step.
struct ThermalCoefficients {
  std::array<std::array<double, 5>, 2> kappa{};

  double& mass(int col) { return kappa[0][col]; }
  double& air(int col) { return kappa[1][col]; }
  double mass(int col) const { return kappa[0][col]; }
  double air(int col) const { return kappa[1][col]; }

  /// Coefficients listed for the default house (three significant figures).
  static ThermalCoefficients reference();
};

struct ThermalState {
  double mass = 16.0;  // T_m [°C]
  double air = 16.0;   // T_air [°C]
};

/// Intermediate conductances of the derivation, exposed for tests and reports.
struct DerivationTrace {
  double mass_area, heat_capacity, total_area;
  double h_tr_is, h_tr_ms, h_tr_opaque, h_tr_em, h_tr_window, h_ve;
  double h_tr_1, h_tr_2, h_tr_3;
  double u_window_eff;
  double phi_int, phi_ia;
};

double effective_window_u(double u_window);

/// Builds kappa from building parameters. internal_gain_rate is W per m² of floor (3.5 by default).
ThermalCoefficients derive_kappa(const BuildingParams& params, double internal_gain_rate = 3.5,
                                 DerivationTrace* trace = nullptr);

ThermalState step_thermal(const ThermalCoefficients& k, const ThermalState& state, double t_ext,
                          double solar_gain, double heating_kwh);

struct HeatingBounds {
  double h_min = 0.0;
  double h_max = 0.0;
  bool feasible = true;  // false when even h = 0 overshoots the upper comfort bound
};

/// Heating range keeping the next air temperature inside [t_lo, t_hi].
HeatingBounds heating_bounds(const ThermalCoefficients& k, const ThermalState& state, double t_ext,
                             double solar_gain, double t_lo, double t_hi);

}  // namespace flexq::thermal
