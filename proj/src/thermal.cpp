#include "flexq/thermal.hpp"

#include <algorithm>
#include <cmath>

namespace flexq::thermal {

namespace {
constexpr double kWattsPerKwhPerHour = 1000.0;
}

void BuildingParams::validate() const {
  const double positives[] = {floor_area, room_height, window_area, door_area, u_ground, u_roof,
                              u_wall,     u_window,    shielding,   n_min,     n_50,     height_correction,
                              area_ratio, h_is,        h_ms,        step_seconds, heat_capacity_per_area,
                              mass_area_factor};
  for (double v : positives) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DegenerateBuilding("non-positive input parameter");
  }
  if (window_count < 0) throw DegenerateBuilding("negative window count");
  if (party_floor_fraction < 0.0 || party_floor_fraction > 1.0)
    throw DegenerateBuilding("party floor fraction outside [0,1]");
}

ThermalCoefficients ThermalCoefficients::reference() {
  ThermalCoefficients k;
  k.kappa = {{{6.84e-2, 9.08e-1, 9.15e-2, 2.62e-4, 2.52e-1},
              {2.40e-1, 8.80e-1, 1.20e-1, 3.46e-4, 1.46}}};
  return k;
}

double effective_window_u(double u_window) { return 1.0 / (1.0 / u_window + 0.04); }

ThermalCoefficients derive_kappa(const BuildingParams& p, double internal_gain_rate,
                                 DerivationTrace* trace) {
  p.validate();
  const double af = p.floor_area;
  const double am = p.mass_area_factor * af;
  const double cm = p.heat_capacity_per_area * af;
  const double at = p.area_ratio * af;
  const double h_tr_is = p.h_is * at;
  const double h_tr_ms = p.h_ms * am;

  const double glazing = p.window_count * p.window_area;
  const double wall_area = 4.0 * std::sqrt(af) * p.room_height - glazing - p.door_area;
  if (!(wall_area > 0.0)) throw DegenerateBuilding("wall area is not positive");

  const double h_opaque = wall_area * p.u_wall + af * p.u_roof + af * (1.0 - p.party_floor_fraction) * p.u_ground;
  if (!(h_opaque < h_tr_ms)) throw DegenerateBuilding("opaque conductance exceeds mass coupling");
  const double h_tr_em = 1.0 / (1.0 / h_opaque - 1.0 / h_tr_ms);

  const double u_eff = effective_window_u(p.u_window);
  // Glazed elements and the door: the H_tr,w of the ISO 13790 network.
  const double h_tr_w = (glazing + p.door_area) * u_eff;

  const double volume = af * p.room_height;
  const double v_min = p.n_min * volume;
  const double v_inf = 2.0 * volume * p.n_50 * p.shielding * p.height_correction;
  const double h_ve = 0.34 * std::max(v_min, v_inf);

  const double h_tr_1 = 1.0 / (1.0 / h_ve + 1.0 / h_tr_is);
  const double h_tr_2 = h_tr_1 + h_tr_w;
  const double h_tr_3 = 1.0 / (1.0 / h_tr_2 + 1.0 / h_tr_ms);
  for (double h : {h_tr_em, h_tr_w, h_ve, h_tr_1, h_tr_2, h_tr_3}) {
    if (!(h > 0.0) || !std::isfinite(h)) throw DegenerateBuilding("non-positive conductance");
  }

  const double phi_int = internal_gain_rate * af;
  const double phi_ia = 0.5 * phi_int;

  const double a = cm / p.step_seconds + 0.5 * (h_tr_3 + h_tr_em);
  const double b = 1.0 - am / at - h_tr_w / (9.1 * at);
  const double c = b * phi_int / 2.0;
  const double d = am * phi_int / (2.0 * at) + h_tr_3 / h_tr_2 * (c + h_tr_1 * phi_ia / h_ve);
  const double e = h_tr_em + h_tr_3 / h_tr_2 * (h_tr_w + h_tr_1);
  const double f = h_tr_ms + h_tr_w + h_tr_1;

  // Mass row, heating in W.
  const double a_t = d / a;
  const double b_t = (cm / p.step_seconds - 0.5 * (h_tr_3 + h_tr_em)) / a;
  const double c_t = e / a;
  const double d_t = (am / at + h_tr_3 * b / h_tr_2) / a;
  const double e_t = h_tr_3 * h_tr_1 / (h_tr_2 * h_ve * a);

  // Surface node helpers.
  const double g = (h_tr_ms * a_t / 2.0 + c + h_tr_1 * phi_ia / h_ve) / f;
  const double hh = h_tr_ms / (2.0 * f) * (1.0 + b_t);
  const double i = (h_tr_ms * c_t / 2.0 + h_tr_w + h_tr_1) / f;
  const double j = (h_tr_ms * d_t / 2.0 + b) / f;
  const double kk = (h_tr_ms * e_t / 2.0 + h_tr_1 / h_ve) / f;

  const double den = h_tr_is + h_ve;
  const double per_kwh = kWattsPerKwhPerHour * 3600.0 / p.step_seconds;

  ThermalCoefficients out;
  out.kappa[0] = {a_t, b_t, c_t, d_t, e_t * per_kwh};
  out.kappa[1] = {(h_tr_is * g + phi_ia) / den, h_tr_is * hh / den, (h_tr_is * i + h_ve) / den,
                  h_tr_is * j / den, (h_tr_is * kk + 1.0) / den * per_kwh};

  if (!(out.kappa[0][1] > 0.0 && out.kappa[0][1] < 1.0))
    throw DegenerateBuilding("mass decay coefficient outside (0,1)");

  if (trace != nullptr) {
    *trace = DerivationTrace{am,      cm,     at,     h_tr_is, h_tr_ms, h_opaque, h_tr_em, h_tr_w,
                             h_ve,    h_tr_1, h_tr_2, h_tr_3,  u_eff,   phi_int,  phi_ia};
  }
  return out;
}

ThermalState step_thermal(const ThermalCoefficients& k, const ThermalState& s, double t_ext,
                          double solar_gain, double heating_kwh) {
  const std::array<double, 5> x{1.0, s.mass, t_ext, solar_gain, heating_kwh};
  ThermalState next;
  next.mass = 0.0;
  next.air = 0.0;
  for (int c = 0; c < 5; ++c) {
    next.mass += k.kappa[0][c] * x[c];
    next.air += k.kappa[1][c] * x[c];
  }
  return next;
}

HeatingBounds heating_bounds(const ThermalCoefficients& k, const ThermalState& s, double t_ext,
                             double solar_gain, double t_lo, double t_hi) {
  const double e_air = k.air(4);
  if (!(e_air > 0.0)) throw std::invalid_argument("heating coefficient must be positive");
  const double passive = k.air(0) + k.air(1) * s.mass + k.air(2) * t_ext + k.air(3) * solar_gain;
  HeatingBounds out;
  out.h_min = std::max(0.0, (t_lo - passive) / e_air);
  const double upper = (t_hi - passive) / e_air;
  if (upper < out.h_min) {
    out.feasible = false;
    out.h_max = out.h_min;
  } else {
    out.h_max = upper;
  }
  return out;
}

}  // namespace flexq::thermal
