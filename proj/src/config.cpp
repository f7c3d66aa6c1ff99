#include "flexq/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace flexq::harness {

namespace {

using nlohmann::json;

/// Reads known keys from one section and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown key " + name_ + "." + key);
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }
  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.contains(key) ? j_.at(key) : empty(), name_ + "." + key);
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void read_pair(Section& s, const char* key, std::pair<double, double>& out) {
  std::vector<double> v{out.first, out.second};
  s.get(key, v);
  require(v.size() == 2, std::string(key) + " needs two values");
  out = {v[0], v[1]};
}

json pair_json(const std::pair<double, double>& p) { return json::array({p.first, p.second}); }

}  // namespace

void ScenarioConfig::validate() const {
  require(!agents.empty(), "agents list is empty");
  for (int n : agents) require(n >= 1, "agent counts must be positive");
  require(!strategies.empty(), "strategies list is empty");
  for (const auto& s : strategies) {
    try {
      marl::StrategyConfig::parse(s).validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  require(workers >= 1, "workers must be at least 1");
  require(horizon == kHoursPerDay, "horizon must be 24 steps of one hour");
  try {
    learning.validate();
    household_params(*this).battery.validate();
    building.validate();
    profiles.synthetic.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  require(battery.round_trip_efficiency > 0.0 && battery.round_trip_efficiency <= 1.0,
          "round-trip efficiency must lie in (0, 1]");
  require(battery.usd_to_gbp > 0.0, "exchange rate must be positive");
  require(grid.voltage > 0.0 && grid.resistance >= 0.0 && grid.distribution_charge >= 0.0,
          "grid line data must be non-negative with positive voltage");
  require(grid.scc_gbp_per_tonne >= 0.0, "social cost of carbon must be non-negative");
  require(series.source == "two_level" || series.source == "csv", "series.source is two_level or csv");
  require(series.source != "csv" || !series.path.empty(), "series.path is required for csv prices");
  require(series.peak_start >= 0 && series.peak_end <= 24 && series.peak_start <= series.peak_end,
          "peak hours must lie within the day");
  require(series.intensity_noise >= 0.0, "intensity noise must be non-negative");
  require(flex.flexible_share >= 0.0 && flex.flexible_share <= 1.0, "flexible share must lie in [0, 1]");
  require(flex.window >= 0, "flexibility window must be non-negative");
  require(comfort.band >= 0.0, "comfort band must be non-negative");
  for (const auto& [a, b] : comfort.windows) require(a >= 0 && b <= 24 && a <= b, "comfort windows within the day");
  require(profiles.source == "synthetic" || profiles.source == "csv", "profiles.source is synthetic or csv");
  if (profiles.source == "csv")
    require(!profiles.load_csv.empty() && !profiles.ev_csv.empty() && !profiles.pv_csv.empty(),
            "csv profiles need load_csv, ev_csv and pv_csv");
  require(profiles.clusters >= 1 && profiles.clusters <= profiles::kMaxClusters, "clusters out of range");
}

ScenarioConfig parse_config(std::istream& in) {
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(e.what());
  }
  ScenarioConfig c;
  {
    Section root(j, "config");
    root.get("agents", c.agents);
    root.get("strategies", c.strategies);
    root.get("seed", c.seed);
    root.get("workers", c.workers);
    root.get("upper_bound", c.upper_bound);
    root.get("dump_policies", c.dump_policies);
    root.get("dump_schedules", c.dump_schedules);
    root.get("horizon", c.horizon);
    {
      auto s = root.sub("learning");
      auto& l = c.learning;
      s.get("gamma", l.gamma);
      s.get("alpha0", l.alpha0);
      s.get("beta", l.beta);
      s.get("epsilon", l.epsilon);
      s.get("epochs", l.epochs);
      s.get("episodes", l.episodes);
      s.get("repetitions", l.repetitions);
      s.get("states", l.states);
      s.get("actions", l.actions);
    }
    {
      auto s = root.sub("battery");
      auto& b = c.battery;
      s.get("capacity", b.capacity);
      s.get("max_charge", b.max_charge);
      s.get("round_trip_efficiency", b.round_trip_efficiency);
      s.get("depreciation_usd_per_mwh", b.depreciation_usd_per_mwh);
      s.get("usd_to_gbp", b.usd_to_gbp);
      s.get("initial_fraction", b.initial_fraction);
      s.get("min_fraction", b.min_fraction);
    }
    {
      auto s = root.sub("grid");
      auto& g = c.grid;
      s.get("voltage", g.voltage);
      s.get("resistance", g.resistance);
      s.get("distribution_charge", g.distribution_charge);
      s.get("scc_gbp_per_tonne", g.scc_gbp_per_tonne);
    }
    {
      auto s = root.sub("series");
      auto& p = c.series;
      s.get("source", p.source);
      s.get("path", p.path);
      s.get("off_peak_price", p.off_peak_price);
      s.get("peak_price", p.peak_price);
      s.get("peak_start", p.peak_start);
      s.get("peak_end", p.peak_end);
      s.get("intensity", p.intensity);
      s.get("intensity_amplitude", p.intensity_amplitude);
      s.get("intensity_noise", p.intensity_noise);
    }
    {
      auto s = root.sub("flexibility");
      s.get("share", c.flex.flexible_share);
      s.get("window", c.flex.window);
    }
    {
      auto s = root.sub("comfort");
      auto& m = c.comfort;
      s.get("target", m.target);
      s.get("setback", m.setback);
      s.get("band", m.band);
      s.get("windows", m.windows);
      s.get("initial_temperature", m.initial_temperature);
    }
    {
      auto s = root.sub("building");
      auto& b = c.building;
      s.get("floor_area", b.floor_area);
      s.get("room_height", b.room_height);
      s.get("window_area", b.window_area);
      s.get("window_count", b.window_count);
      s.get("door_area", b.door_area);
      s.get("u_ground", b.u_ground);
      s.get("u_roof", b.u_roof);
      s.get("u_wall", b.u_wall);
      s.get("u_window", b.u_window);
      s.get("shielding", b.shielding);
      s.get("n_min", b.n_min);
      s.get("n_50", b.n_50);
      s.get("party_floor_fraction", b.party_floor_fraction);
      s.get("height_correction", b.height_correction);
      s.get("area_ratio", b.area_ratio);
      s.get("h_is", b.h_is);
      s.get("h_ms", b.h_ms);
      s.get("step_seconds", b.step_seconds);
      s.get("heat_capacity_per_area", b.heat_capacity_per_area);
      s.get("mass_area_factor", b.mass_area_factor);
    }
    {
      auto s = root.sub("profiles");
      auto& p = c.profiles;
      s.get("source", p.source);
      s.get("load_csv", p.load_csv);
      s.get("ev_csv", p.ev_csv);
      s.get("pv_csv", p.pv_csv);
      s.get("clusters", p.clusters);
      s.get("seed", p.seed);
      auto y = s.sub("synthetic");
      auto& q = p.synthetic;
      y.get("clusters", q.clusters);
      y.get("bank_size", q.bank_size);
      y.get("correlation", q.correlation);
      read_pair(y, "load_lambda", q.load_lambda);
      read_pair(y, "ev_lambda", q.ev_lambda);
      read_pair(y, "pv_lambda", q.pv_lambda);
      y.get("ev_intervals", q.ev_intervals);
      y.get("month", q.month);
      y.get("temp_mean", q.temp_mean);
      y.get("temp_amplitude", q.temp_amplitude);
      y.get("temp_day_sigma", q.temp_day_sigma);
      y.get("ev_consumption_scale", q.ev_consumption_scale);
    }
  }
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return parse_config(in);
}

std::string dump_config(const ScenarioConfig& c) {
  const auto& l = c.learning;
  const auto& b = c.building;
  const auto& q = c.profiles.synthetic;
  json j = {
      {"agents", c.agents},
      {"strategies", c.strategies},
      {"seed", c.seed},
      {"workers", c.workers},
      {"upper_bound", c.upper_bound},
      {"dump_policies", c.dump_policies},
      {"dump_schedules", c.dump_schedules},
      {"horizon", c.horizon},
      {"learning",
       {{"gamma", l.gamma}, {"alpha0", l.alpha0}, {"beta", l.beta}, {"epsilon", l.epsilon}, {"epochs", l.epochs},
        {"episodes", l.episodes}, {"repetitions", l.repetitions}, {"states", l.states}, {"actions", l.actions}}},
      {"battery",
       {{"capacity", c.battery.capacity}, {"max_charge", c.battery.max_charge},
        {"round_trip_efficiency", c.battery.round_trip_efficiency},
        {"depreciation_usd_per_mwh", c.battery.depreciation_usd_per_mwh}, {"usd_to_gbp", c.battery.usd_to_gbp},
        {"initial_fraction", c.battery.initial_fraction}, {"min_fraction", c.battery.min_fraction}}},
      {"grid",
       {{"voltage", c.grid.voltage}, {"resistance", c.grid.resistance},
        {"distribution_charge", c.grid.distribution_charge}, {"scc_gbp_per_tonne", c.grid.scc_gbp_per_tonne}}},
      {"series",
       {{"source", c.series.source}, {"path", c.series.path}, {"off_peak_price", c.series.off_peak_price},
        {"peak_price", c.series.peak_price}, {"peak_start", c.series.peak_start}, {"peak_end", c.series.peak_end},
        {"intensity", c.series.intensity}, {"intensity_amplitude", c.series.intensity_amplitude},
        {"intensity_noise", c.series.intensity_noise}}},
      {"flexibility", {{"share", c.flex.flexible_share}, {"window", c.flex.window}}},
      {"comfort",
       {{"target", c.comfort.target}, {"setback", c.comfort.setback}, {"band", c.comfort.band},
        {"windows", c.comfort.windows}, {"initial_temperature", c.comfort.initial_temperature}}},
      {"building",
       {{"floor_area", b.floor_area}, {"room_height", b.room_height}, {"window_area", b.window_area},
        {"window_count", b.window_count}, {"door_area", b.door_area}, {"u_ground", b.u_ground},
        {"u_roof", b.u_roof}, {"u_wall", b.u_wall}, {"u_window", b.u_window}, {"shielding", b.shielding},
        {"n_min", b.n_min}, {"n_50", b.n_50}, {"party_floor_fraction", b.party_floor_fraction},
        {"height_correction", b.height_correction}, {"area_ratio", b.area_ratio}, {"h_is", b.h_is},
        {"h_ms", b.h_ms}, {"step_seconds", b.step_seconds}, {"heat_capacity_per_area", b.heat_capacity_per_area},
        {"mass_area_factor", b.mass_area_factor}}},
      {"profiles",
       {{"source", c.profiles.source},
        {"load_csv", c.profiles.load_csv},
        {"ev_csv", c.profiles.ev_csv},
        {"pv_csv", c.profiles.pv_csv},
        {"clusters", c.profiles.clusters},
        {"seed", c.profiles.seed},
        {"synthetic",
         {{"clusters", q.clusters}, {"bank_size", q.bank_size}, {"correlation", q.correlation},
          {"load_lambda", pair_json(q.load_lambda)}, {"ev_lambda", pair_json(q.ev_lambda)},
          {"pv_lambda", pair_json(q.pv_lambda)}, {"ev_intervals", q.ev_intervals}, {"month", q.month},
          {"temp_mean", q.temp_mean}, {"temp_amplitude", q.temp_amplitude}, {"temp_day_sigma", q.temp_day_sigma},
          {"ev_consumption_scale", q.ev_consumption_scale}}}}},
  };
  return j.dump(2) + "\n";
}

scenario::PriceSeries load_series(const ScenarioConfig& c) {
  scenario::PriceSeries s;
  const int T = c.horizon;
  if (c.series.source == "two_level") {
    for (int t = 0; t < T; ++t) {
      const int h = t % 24;
      const bool peak = h >= c.series.peak_start && h < c.series.peak_end;
      s.price.push_back(peak ? c.series.peak_price : c.series.off_peak_price);
      s.intensity.push_back(c.series.intensity +
                            c.series.intensity_amplitude * std::sin(2.0 * M_PI * (h - 12.0) / 24.0));
    }
    return s;
  }
  std::ifstream in(c.series.path);
  if (!in) throw ConfigError("cannot open " + c.series.path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("hour,price,intensity", 0) != 0)
    throw ConfigError(c.series.path + ": header must be hour,price,intensity");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string hour, price, intensity;
    if (!std::getline(ss, hour, ',') || !std::getline(ss, price, ',') || !std::getline(ss, intensity))
      throw ConfigError(c.series.path + ": malformed row " + line);
    s.price.push_back(std::stod(price));
    s.intensity.push_back(std::stod(intensity));
  }
  if (static_cast<int>(s.price.size()) != T)
    throw ConfigError(c.series.path + ": expected " + std::to_string(T) + " rows, found " +
                      std::to_string(s.price.size()));
  return s;
}

env::HouseholdParams household_params(const ScenarioConfig& c) {
  env::HouseholdParams hp;
  auto& b = hp.battery;
  b.capacity = c.battery.capacity;
  b.max_charge = c.battery.max_charge;
  b.eta_charge = b.eta_discharge = std::sqrt(c.battery.round_trip_efficiency);
  b.depreciation = c.battery.depreciation_usd_per_mwh * c.battery.usd_to_gbp / 1000.0;
  b.initial_level = c.battery.initial_fraction * c.battery.capacity;
  b.min_level = c.battery.min_fraction * c.battery.capacity;
  hp.kappa = thermal::derive_kappa(c.building);
  hp.flex = c.flex;
  hp.comfort = env::comfort_schedule(c.horizon, c.comfort.target, c.comfort.setback, c.comfort.band, c.comfort.windows);
  hp.initial_thermal = {c.comfort.initial_temperature, c.comfort.initial_temperature};
  return hp;
}

env::GridParams grid_params(const ScenarioConfig& c) {
  env::GridParams g;
  g.distribution_charge = c.grid.distribution_charge;
  g.resistance = c.grid.resistance;
  g.voltage = c.grid.voltage;
  return scenario::make_grid(load_series(c), c.grid.scc_gbp_per_tonne / 1000.0, g, c.horizon);
}

scenario::ScenarioSetup make_setup(const ScenarioConfig& c) {
  scenario::ScenarioSetup s;
  s.household = household_params(c);
  s.grid = grid_params(c);
  s.series = load_series(c);
  s.scc_per_kg = c.grid.scc_gbp_per_tonne / 1000.0;
  s.intensity_noise = c.series.intensity_noise;
  s.chain = c.profiles.synthetic;
  s.upper_bound = c.upper_bound;
  if (c.profiles.source == "synthetic") {
    profiles::Rng rng(c.profiles.seed);
    s.models = profiles::generate_synthetic_bank(c.profiles.synthetic, rng);
  } else {
    auto fit = [&](const std::string& path, profiles::Component comp) {
      const auto loaded = profiles::load_profiles_csv(path);
      return profiles::fit_component(loaded.profiles, comp, c.profiles.clusters, c.profiles.seed,
                                     c.profiles.synthetic.ev_intervals);
    };
    s.models.load = fit(c.profiles.load_csv, profiles::Component::load);
    s.models.ev = fit(c.profiles.ev_csv, profiles::Component::ev);
    s.models.pv = fit(c.profiles.pv_csv, profiles::Component::pv);
  }
  return s;
}

}  // namespace flexq::harness
