#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flexq/day_profile.hpp"

namespace flexq::profiles {

using Rng = std::mt19937_64;
using Series = std::vector<double>;

enum class DayType : int { weekday = 0, weekend = 1 };
inline constexpr int kDayTypes = 2;

enum class FeatureSet { load, ev, raw };

class InsufficientData : public std::invalid_argument {
 public:
  explicit InsufficientData(const std::string& what) : std::invalid_argument(what) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Divides by the daily total. All-zero days stay all-zero.
Series normalise(const Series& day);
double daily_total(const Series& day);

/// Clustering features of a normalised day.
/// load: peak magnitude, peak hour / 24, mean over [7,10) and over [17,22).
/// ev: values from 6h to 22h.
Series features(const Series& normalised_day, FeatureSet set);

struct ClusterFit {
  std::vector<Series> centroids;  // profile-space means of the members, rescaled to sum to 1 unless all zero or raw
  std::vector<int> assignments;
  double inertia = 0.0;           // within-cluster sum of squares in feature space
};

/// K-means with k-means++ seeding, best of `restarts` runs.
ClusterFit fit_clusters(const std::vector<Series>& normalised, int k, FeatureSet set, std::uint64_t seed,
                        int restarts = 4);

/// Cluster model of one component: per day type, centroids and p(k'|k, w, w').
struct ClusterModel {
  std::array<std::vector<Series>, kDayTypes> centroids;
  // transitions[w][w'][k][k']
  std::array<std::array<std::vector<Series>, kDayTypes>, kDayTypes> transitions;

  int clusters(DayType w) const { return static_cast<int>(centroids[static_cast<int>(w)].size()); }
  const Series& row(DayType w, DayType w_next, int k) const;
  void validate() const;
};

struct GammaResidual {
  double shape = 2.0;
  double scale = 0.0;  // zero scale means no residual
};

/// Day-to-day evolution of the scaling factor lambda (the daily total).
struct ScalingModel {
  enum class Kind { gamma_residual, discrete_matrix };
  Kind kind = Kind::gamma_residual;
  double lambda_min = 0.0;
  double lambda_max = 1e9;

  // gamma residual, keyed by (bank, next bank); missing pairs use fallback_gamma
  std::map<std::pair<int, int>, GammaResidual> gamma;
  GammaResidual fallback_gamma;

  // discrete matrix over intervals; lambda takes interval midpoints
  std::vector<double> edges;                                  // intervals + 1 increasing values
  std::map<std::pair<int, int>, std::vector<Series>> matrix;  // per bank pair, interval x interval
  std::vector<Series> marginal;                               // fallback for sparse or missing rows

  int intervals() const { return static_cast<int>(edges.size()) - 1; }
  int interval_of(double lambda) const;
  double midpoint(int interval) const;
  void validate() const;

  double sample(double lambda, int bank, int next_bank, Rng& rng) const;
};

/// Normalised day shape, with EV availability when the component is EV.
struct NormalisedDay {
  Series shape;
  std::vector<bool> at_home;  // empty for load and PV
};

/// Profiles grouped by bank key: cluster + clusters_max * day type for load and EV, month for PV.
struct ProfileBank {
  std::map<int, std::vector<NormalisedDay>> banks;

  const std::vector<NormalisedDay>& at(int key) const;
  void validate() const;
};

enum class Component { load, ev, pv };

inline constexpr int kMaxClusters = 16;
inline int bank_key(int cluster, DayType w) { return cluster + kMaxClusters * static_cast<int>(w); }

struct ComponentModel {
  Component component = Component::load;
  ClusterModel clusters;  // unused for PV
  ScalingModel scaling;
  ProfileBank bank;

  void validate() const;
};

struct ChainState {
  int cluster = 0;  // month for PV
  DayType day_type = DayType::weekday;
  double lambda = 0.0;
};

struct ComponentDraw {
  Series values;              // scaled to the daily total lambda
  std::vector<bool> at_home;  // EV only
  ChainState state;
};

/// One Markov step: next cluster, a profile from its bank and the next scaling factor.
ComponentDraw next_day(const ChainState& current, DayType next_type, const ComponentModel& model, Rng& rng);

struct SyntheticConfig {
  int clusters = 4;               // per day type for load and EV, EV cluster 0 is "no travel"
  int bank_size = 20;             // normalised profiles per bank
  double correlation = 0.8;       // 1 gives a constant lambda sequence
  std::pair<double, double> load_lambda{6.0, 16.0};
  std::pair<double, double> ev_lambda{0.0, 30.0};
  std::pair<double, double> pv_lambda{0.0, 4.0};
  int ev_intervals = 50;
  int month = 0;                  // 0 = January
  double temp_mean = 4.0;         // external temperature [°C]
  double temp_amplitude = 3.0;
  double temp_day_sigma = 2.0;
  double ev_consumption_scale = 1.0;

  void validate() const;
};

struct SyntheticModels {
  ComponentModel load;
  ComponentModel ev;
  ComponentModel pv;
};

SyntheticModels generate_synthetic_bank(const SyntheticConfig& config, Rng& rng);

/// Chains the three components and weather into household days.
class HouseholdChain {
 public:
  HouseholdChain(const SyntheticModels& models, const SyntheticConfig& config, Rng& rng, int first_weekday = 2);

  DayProfile next(Rng& rng);
  int day_index() const { return day_; }

 private:
  DayType type_of(int day) const;

  const SyntheticModels* models_;
  SyntheticConfig config_;
  ChainState load_, ev_, pv_;
  int day_ = 0;
  int first_weekday_;  // 0 = Monday
};

// ---- CSV ingestion ----

struct RawProfile {
  std::string id;
  std::string date;  // YYYY-MM-DD
  DayType day_type = DayType::weekday;
  Series values;     // NaN where missing before filling
};

struct CsvLoad {
  std::vector<RawProfile> profiles;
  std::vector<std::string> warnings;
};

/// Reads `id,date,day_type,h00..h23`. Fills isolated missing points and rejects days with longer gaps.
CsvLoad load_profiles_csv(const std::string& path);
CsvLoad parse_profiles_csv(std::istream& in);
void write_profiles_csv(std::ostream& out, const std::vector<RawProfile>& profiles);

/// Fits a component model from consecutive-day records (same id, next date).
ComponentModel fit_component(const std::vector<RawProfile>& days, Component component, int k,
                             std::uint64_t seed, int ev_intervals = 50);

}  // namespace flexq::profiles
