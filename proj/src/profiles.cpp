#include "flexq/profiles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace flexq::profiles {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sq_dist(const Series& a, const Series& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

void check_row(const Series& row, const char* what) {
  double s = 0.0;
  for (double p : row) {
    if (!(p >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative probability");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
}

void normalise_row(Series& row) {
  const double s = std::accumulate(row.begin(), row.end(), 0.0);
  if (s > 0.0)
    for (double& p : row) p /= s;
}

int sample_index(const Series& probs, Rng& rng) {
  std::discrete_distribution<int> d(probs.begin(), probs.end());
  return d(rng);
}

struct Lloyd {
  std::vector<Series> centres;
  std::vector<int> assignments;
  double inertia = 0.0;
};

Lloyd lloyd(const std::vector<Series>& x, int k, Rng& rng) {
  const std::size_t n = x.size();
  Lloyd out;
  // k-means++ seeding
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  out.centres.push_back(x[pick(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(out.centres.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : out.centres) d2[i] = std::min(d2[i], sq_dist(x[i], c));
      total += d2[i];
    }
    if (total <= 0.0) {
      out.centres.push_back(x[pick(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r <= 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    out.centres.push_back(x[chosen]);
  }

  out.assignments.assign(n, -1);
  const std::size_t dim = x.front().size();
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(x[i], out.centres[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(x[i], out.centres[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != out.assignments[i]) {
        out.assignments[i] = best;
        changed = true;
      }
    }
    std::vector<Series> sums(k, Series(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[out.assignments[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[out.assignments[i]][j] += x[i][j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // re-seed an empty cluster with the point farthest from its centre
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(x[i], out.centres[out.assignments[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        out.centres[c] = x[far];
        out.assignments[far] = c;
        changed = true;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) out.centres[c][j] = sums[c][j] / counts[c];
    }
    if (!changed) break;
  }
  out.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) out.inertia += sq_dist(x[i], out.centres[out.assignments[i]]);
  return out;
}

}  // namespace

double daily_total(const Series& day) { return std::accumulate(day.begin(), day.end(), 0.0); }

Series normalise(const Series& day) {
  const double total = daily_total(day);
  Series out(day.size(), 0.0);
  if (total > 0.0)
    for (std::size_t t = 0; t < day.size(); ++t) out[t] = day[t] / total;
  return out;
}

Series features(const Series& x, FeatureSet set) {
  switch (set) {
    case FeatureSet::raw:
      return x;
    case FeatureSet::ev: {
      if (x.size() < 23) throw std::invalid_argument("EV features need a 24-step day");
      return Series(x.begin() + 6, x.begin() + 23);
    }
    case FeatureSet::load: {
      if (x.size() < 22) throw std::invalid_argument("load features need a 24-step day");
      const auto peak = std::max_element(x.begin(), x.end());
      const double morning = std::accumulate(x.begin() + 7, x.begin() + 10, 0.0) / 3.0;
      const double evening = std::accumulate(x.begin() + 17, x.begin() + 22, 0.0) / 5.0;
      return {*peak, static_cast<double>(peak - x.begin()) / static_cast<double>(x.size()), morning, evening};
    }
  }
  return x;
}

ClusterFit fit_clusters(const std::vector<Series>& normalised, int k, FeatureSet set, std::uint64_t seed,
                        int restarts) {
  if (k < 1) throw std::invalid_argument("cluster count must be at least 1");
  if (static_cast<int>(normalised.size()) < k) throw InsufficientData("insufficient data: fewer profiles than clusters");
  std::vector<Series> x;
  x.reserve(normalised.size());
  for (const auto& p : normalised) x.push_back(features(p, set));

  Rng rng(seed);
  Lloyd best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Lloyd run = lloyd(x, k, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }

  ClusterFit fit;
  fit.assignments = best.assignments;
  fit.inertia = best.inertia;
  const std::size_t dim = normalised.front().size();
  fit.centroids.assign(k, Series(dim, 0.0));
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < normalised.size(); ++i) {
    ++counts[fit.assignments[i]];
    for (std::size_t j = 0; j < dim; ++j) fit.centroids[fit.assignments[i]][j] += normalised[i][j];
  }
  for (int c = 0; c < k; ++c) {
    for (double& v : fit.centroids[c]) v /= std::max(counts[c], 1);
    // mixing travel and no-travel days leaves a partial total
    const double total = daily_total(fit.centroids[c]);
    if (set != FeatureSet::raw && total > 0.0)
      for (double& v : fit.centroids[c]) v /= total;
  }
  return fit;
}

const Series& ClusterModel::row(DayType w, DayType w_next, int k) const {
  const auto& m = transitions[static_cast<int>(w)][static_cast<int>(w_next)];
  if (k < 0 || k >= static_cast<int>(m.size())) throw std::out_of_range("cluster index outside the model");
  return m[k];
}

void ClusterModel::validate() const {
  for (int w = 0; w < kDayTypes; ++w) {
    for (const auto& c : centroids[w]) {
      const double s = daily_total(c);
      if (std::abs(s - 1.0) > 1e-9 && std::abs(s) > 1e-12)
        throw std::invalid_argument("centroid is not normalised");
    }
    for (int w2 = 0; w2 < kDayTypes; ++w2) {
      const auto& m = transitions[w][w2];
      if (m.size() != centroids[w].size()) throw std::invalid_argument("transition matrix has wrong row count");
      for (const auto& r : m) {
        if (r.size() != centroids[w2].size()) throw std::invalid_argument("transition matrix has wrong column count");
        check_row(r, "cluster transition");
      }
    }
  }
}

int ScalingModel::interval_of(double lambda) const {
  const int n = intervals();
  if (n < 1) throw std::logic_error("discrete scaling model has no intervals");
  const auto it = std::upper_bound(edges.begin(), edges.end(), lambda);
  return std::clamp(static_cast<int>(it - edges.begin()) - 1, 0, n - 1);
}

double ScalingModel::midpoint(int interval) const { return 0.5 * (edges[interval] + edges[interval + 1]); }

void ScalingModel::validate() const {
  if (!(lambda_min >= 0.0) || !(lambda_max >= lambda_min)) throw std::invalid_argument("invalid lambda range");
  if (kind == Kind::gamma_residual) {
    auto check = [](const GammaResidual& g) {
      if (!(g.shape > 0.0) || !(g.scale >= 0.0)) throw std::invalid_argument("invalid gamma residual");
    };
    check(fallback_gamma);
    for (const auto& [key, g] : gamma) check(g);
    return;
  }
  const int n = intervals();
  if (n < 1) throw std::invalid_argument("discrete scaling model needs intervals");
  for (int i = 0; i < n; ++i)
    if (!(edges[i + 1] > edges[i])) throw std::invalid_argument("interval edges must increase");
  if (static_cast<int>(marginal.size()) != n) throw std::invalid_argument("marginal matrix has wrong size");
  for (const auto& r : marginal) {
    if (static_cast<int>(r.size()) != n) throw std::invalid_argument("marginal row has wrong size");
    check_row(r, "scaling transition");
  }
  for (const auto& [key, m] : matrix) {
    if (static_cast<int>(m.size()) != n) throw std::invalid_argument("scaling matrix has wrong size");
    for (const auto& r : m)
      if (!r.empty()) check_row(r, "scaling transition");
  }
}

double ScalingModel::sample(double lambda, int bank, int next_bank, Rng& rng) const {
  if (kind == Kind::gamma_residual) {
    const auto it = gamma.find({bank, next_bank});
    const GammaResidual& g = it != gamma.end() ? it->second : fallback_gamma;
    double x = 0.0;
    if (g.scale > 0.0) {
      std::gamma_distribution<double> dist(g.shape, g.scale);
      x = dist(rng) - g.shape * g.scale;
    }
    return std::clamp(lambda + x, lambda_min, lambda_max);
  }
  const int i = interval_of(lambda);
  const Series* row = &marginal[i];
  const auto it = matrix.find({bank, next_bank});
  if (it != matrix.end() && !it->second[i].empty()) row = &it->second[i];
  return std::clamp(midpoint(sample_index(*row, rng)), lambda_min, lambda_max);
}

const std::vector<NormalisedDay>& ProfileBank::at(int key) const {
  const auto it = banks.find(key);
  if (it == banks.end() || it->second.empty())
    throw std::out_of_range("empty profile bank " + std::to_string(key));
  return it->second;
}

void ProfileBank::validate() const {
  for (const auto& [key, days] : banks) {
    if (days.empty()) throw std::invalid_argument("empty profile bank " + std::to_string(key));
    for (const auto& d : days) {
      const double s = daily_total(d.shape);
      if (std::abs(s - 1.0) > 1e-9 && std::abs(s) > 1e-12)
        throw std::invalid_argument("bank profile is not normalised");
      if (!d.at_home.empty() && d.at_home.size() != d.shape.size())
        throw std::invalid_argument("availability length mismatch");
    }
  }
}

void ComponentModel::validate() const {
  if (component != Component::pv) {
    clusters.validate();
    for (int w = 0; w < kDayTypes; ++w)
      for (int k = 0; k < clusters.clusters(static_cast<DayType>(w)); ++k)
        bank.at(bank_key(k, static_cast<DayType>(w)));
  }
  scaling.validate();
  bank.validate();
}

ComponentDraw next_day(const ChainState& current, DayType next_type, const ComponentModel& model, Rng& rng) {
  ComponentDraw out;
  out.state.day_type = next_type;
  int bank = 0, next_bank = 0;
  if (model.component == Component::pv) {
    out.state.cluster = current.cluster;
    bank = next_bank = current.cluster;
  } else {
    const Series& row = model.clusters.row(current.day_type, next_type, current.cluster);
    out.state.cluster = sample_index(row, rng);
    bank = bank_key(current.cluster, current.day_type);
    next_bank = bank_key(out.state.cluster, next_type);
  }
  const auto& candidates = model.bank.at(next_bank);
  const auto& chosen = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
  out.state.lambda = model.scaling.sample(current.lambda, bank, next_bank, rng);
  out.values.resize(chosen.shape.size());
  for (std::size_t t = 0; t < chosen.shape.size(); ++t) out.values[t] = chosen.shape[t] * out.state.lambda;
  out.at_home = chosen.at_home;
  return out;
}

// ---- synthetic generator ----

void SyntheticConfig::validate() const {
  if (clusters < 1 || clusters > kMaxClusters) throw std::invalid_argument("cluster count out of range");
  if (clusters < 2) throw std::invalid_argument("EV needs a no-travel cluster and at least one travel cluster");
  if (bank_size < 1) throw std::invalid_argument("bank size must be positive");
  if (!(correlation >= 0.0 && correlation <= 1.0)) throw std::invalid_argument("correlation must lie in [0,1]");
  for (const auto& r : {load_lambda, ev_lambda, pv_lambda})
    if (!(r.first >= 0.0 && r.second >= r.first)) throw std::invalid_argument("invalid lambda range");
  if (ev_intervals < 1) throw std::invalid_argument("EV interval count must be positive");
  if (month < 0 || month > 11) throw std::invalid_argument("month must lie in 0..11");
  if (!(ev_consumption_scale >= 0.0)) throw std::invalid_argument("EV consumption scale must be non-negative");
}

namespace {

Series gaussian_bumps(const std::vector<std::array<double, 3>>& bumps, double floor) {
  Series s(kHoursPerDay, floor);
  for (int h = 0; h < kHoursPerDay; ++h)
    for (const auto& b : bumps) s[h] += b[0] * std::exp(-0.5 * std::pow((h - b[1]) / b[2], 2));
  return s;
}

Series load_archetype(int k, DayType w) {
  const double shift = w == DayType::weekend ? 1.5 : 0.0;
  switch (k % 4) {
    case 0: return gaussian_bumps({{1.0, 7.5 + shift, 1.2}, {1.6, 18.5, 1.8}}, 0.25);
    case 1: return gaussian_bumps({{0.4, 8.0 + shift, 1.5}, {2.2, 19.0, 1.5}}, 0.2);
    case 2: return gaussian_bumps({{0.8, 9.0 + shift, 2.0}, {0.9, 13.0, 3.0}, {1.0, 18.0, 2.0}}, 0.3);
    default: return gaussian_bumps({{0.5, 10.0 + shift, 1.5}, {1.4, 21.5, 1.5}}, 0.35);
  }
}

NormalisedDay noisy(const Series& base, double sigma, Rng& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  Series s(base.size());
  for (std::size_t t = 0; t < base.size(); ++t) s[t] = base[t] * std::exp(n(rng));
  return {normalise(s), {}};
}

NormalisedDay ev_trip_day(int cluster, DayType w, Rng& rng) {
  NormalisedDay d;
  d.shape.assign(kHoursPerDay, 0.0);
  d.at_home.assign(kHoursPerDay, true);
  if (cluster == 0) return d;
  auto draw = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  int leave = 0, back = 0;
  switch ((cluster - 1) % 3) {
    case 0:
      leave = w == DayType::weekend ? draw(9, 11) : draw(7, 8);
      back = w == DayType::weekend ? draw(13, 16) : draw(17, 18);
      break;
    case 1:
      leave = draw(10, 12);
      back = leave + draw(1, 3);
      break;
    default:
      leave = draw(17, 18);
      back = leave + draw(1, 2);
      break;
  }
  const double out_share = std::uniform_real_distribution<double>(0.4, 0.6)(rng);
  for (int t = leave; t <= back; ++t) d.at_home[t] = false;
  d.shape[leave] += out_share;
  d.shape[back] += 1.0 - out_share;
  return d;
}

Series pv_shape(int month, Rng& rng) {
  // shorter, lower days in winter
  const double season = std::cos(2.0 * M_PI * (month - 5.5) / 12.0);
  const double half_width = 3.5 + 2.5 * season;
  const double peak = 12.5 + std::uniform_real_distribution<double>(-0.7, 0.7)(rng);
  Series s(kHoursPerDay, 0.0);
  for (int h = 0; h < kHoursPerDay; ++h) {
    const double z = (h + 0.5 - peak) / half_width;
    if (std::abs(z) < 1.0) s[h] = std::cos(0.5 * M_PI * z) * std::exp(std::normal_distribution<double>(0.0, 0.1)(rng));
  }
  return normalise(s);
}

std::vector<Series> random_transitions(int from, int to, double persistence, Rng& rng) {
  std::vector<Series> m(from, Series(to, 0.0));
  std::uniform_real_distribution<double> u(0.2, 1.0);
  for (int k = 0; k < from; ++k) {
    for (int j = 0; j < to; ++j) m[k][j] = u(rng);
    normalise_row(m[k]);
    for (int j = 0; j < to; ++j) m[k][j] *= 1.0 - persistence;
    m[k][std::min(k, to - 1)] += persistence;
    normalise_row(m[k]);
  }
  return m;
}

void fill_centroids(ComponentModel& m, int k) {
  for (int w = 0; w < kDayTypes; ++w) {
    m.clusters.centroids[w].assign(k, Series(kHoursPerDay, 0.0));
    for (int c = 0; c < k; ++c) {
      const auto& bank = m.bank.at(bank_key(c, static_cast<DayType>(w)));
      for (const auto& d : bank)
        for (int t = 0; t < kHoursPerDay; ++t) m.clusters.centroids[w][c][t] += d.shape[t] / bank.size();
      const double s = daily_total(m.clusters.centroids[w][c]);
      if (s > 0.0)
        for (double& v : m.clusters.centroids[w][c]) v /= s;
    }
  }
}

GammaResidual residual_for(double correlation, std::pair<double, double> range) {
  // spread of day-to-day changes shrinks as the correlation approaches one
  const double sd = (1.0 - correlation) * 0.25 * (range.second - range.first);
  GammaResidual g;
  g.shape = 2.0;
  g.scale = sd / std::sqrt(g.shape);
  return g;
}

}  // namespace

SyntheticModels generate_synthetic_bank(const SyntheticConfig& c, Rng& rng) {
  c.validate();
  SyntheticModels out;
  const double persistence = 0.3 + 0.6 * c.correlation;

  // household load
  out.load.component = Component::load;
  for (int w = 0; w < kDayTypes; ++w)
    for (int k = 0; k < c.clusters; ++k)
      for (int i = 0; i < c.bank_size; ++i)
        out.load.bank.banks[bank_key(k, static_cast<DayType>(w))].push_back(
            noisy(load_archetype(k, static_cast<DayType>(w)), 0.15, rng));
  fill_centroids(out.load, c.clusters);
  for (int w = 0; w < kDayTypes; ++w)
    for (int w2 = 0; w2 < kDayTypes; ++w2)
      out.load.clusters.transitions[w][w2] = random_transitions(c.clusters, c.clusters, persistence, rng);
  out.load.scaling.kind = ScalingModel::Kind::gamma_residual;
  out.load.scaling.lambda_min = c.load_lambda.first;
  out.load.scaling.lambda_max = c.load_lambda.second;
  out.load.scaling.fallback_gamma = residual_for(c.correlation, c.load_lambda);

  // EV, cluster 0 never travels
  out.ev.component = Component::ev;
  for (int w = 0; w < kDayTypes; ++w)
    for (int k = 0; k < c.clusters; ++k)
      for (int i = 0; i < c.bank_size; ++i)
        out.ev.bank.banks[bank_key(k, static_cast<DayType>(w))].push_back(ev_trip_day(k, static_cast<DayType>(w), rng));
  fill_centroids(out.ev, c.clusters);
  for (int w = 0; w < kDayTypes; ++w)
    for (int w2 = 0; w2 < kDayTypes; ++w2)
      out.ev.clusters.transitions[w][w2] = random_transitions(c.clusters, c.clusters, persistence, rng);
  auto& evs = out.ev.scaling;
  evs.kind = ScalingModel::Kind::discrete_matrix;
  evs.lambda_min = c.ev_lambda.first;
  evs.lambda_max = c.ev_lambda.second;
  const int n = c.ev_intervals;
  evs.edges.resize(n + 1);
  for (int i = 0; i <= n; ++i) evs.edges[i] = c.ev_lambda.first + (c.ev_lambda.second - c.ev_lambda.first) * i / n;
  if (!(evs.edges.back() > evs.edges.front())) evs.edges.back() = evs.edges.front() + 1.0;
  evs.marginal.assign(n, Series(n, 0.0));
  const double width = (1.0 - c.correlation) * 0.2 * n;
  for (int i = 0; i < n; ++i) {
    if (width <= 0.0) {
      evs.marginal[i][i] = 1.0;
      continue;
    }
    for (int j = 0; j < n; ++j) evs.marginal[i][j] = std::exp(-0.5 * std::pow((j - i) / width, 2));
    normalise_row(evs.marginal[i]);
  }

  // PV, one bank per month
  out.pv.component = Component::pv;
  for (int i = 0; i < c.bank_size; ++i) out.pv.bank.banks[c.month].push_back({pv_shape(c.month, rng), {}});
  out.pv.scaling.kind = ScalingModel::Kind::gamma_residual;
  out.pv.scaling.lambda_min = c.pv_lambda.first;
  out.pv.scaling.lambda_max = c.pv_lambda.second;
  out.pv.scaling.fallback_gamma = residual_for(c.correlation, c.pv_lambda);

  return out;
}

HouseholdChain::HouseholdChain(const SyntheticModels& models, const SyntheticConfig& config, Rng& rng,
                               int first_weekday)
    : models_(&models), config_(config), first_weekday_(first_weekday) {
  config_.validate();
  const DayType w0 = type_of(-1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  load_ = {std::uniform_int_distribution<int>(0, models.load.clusters.clusters(w0) - 1)(rng), w0,
           config_.load_lambda.first + u(rng) * (config_.load_lambda.second - config_.load_lambda.first)};
  const auto& evs = models.ev.scaling;
  ev_ = {std::uniform_int_distribution<int>(0, models.ev.clusters.clusters(w0) - 1)(rng), w0,
         evs.midpoint(std::uniform_int_distribution<int>(0, evs.intervals() - 1)(rng))};
  pv_ = {config_.month, w0, config_.pv_lambda.first + u(rng) * (config_.pv_lambda.second - config_.pv_lambda.first)};
}

DayType HouseholdChain::type_of(int day) const {
  const int weekday = ((first_weekday_ + day) % 7 + 7) % 7;
  return weekday >= 5 ? DayType::weekend : DayType::weekday;
}

DayProfile HouseholdChain::next(Rng& rng) {
  const DayType w = type_of(day_);
  auto load = next_day(load_, w, models_->load, rng);
  auto ev = next_day(ev_, w, models_->ev, rng);
  auto pv = next_day(pv_, w, models_->pv, rng);
  load_ = load.state;
  ev_ = ev.state;
  pv_ = pv.state;
  ++day_;

  DayProfile d = DayProfile::flat(kHoursPerDay);
  d.household_demand = std::move(load.values);
  d.pv_generation = std::move(pv.values);
  d.ev_demand = std::move(ev.values);
  for (double& e : d.ev_demand) e *= config_.ev_consumption_scale;
  d.ev_at_home = std::move(ev.at_home);
  const double daily = config_.temp_mean + std::normal_distribution<double>(0.0, config_.temp_day_sigma)(rng);
  for (int h = 0; h < kHoursPerDay; ++h)
    d.external_temp[h] = daily + config_.temp_amplitude * std::sin(2.0 * M_PI * (h - 9.0) / 24.0);
  d.validate();
  return d;
}

// ---- CSV ----

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::chrono::sys_days parse_date(const std::string& s, std::size_t line) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) throw ParseError("bad date '" + s + "'", line);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw ParseError("invalid date '" + s + "'", line);
  return std::chrono::sys_days{ymd};
}

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

int month_of(const std::string& date) {
  const std::chrono::year_month_day ymd{parse_date(date, 0)};
  return static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
}

}  // namespace

CsvLoad parse_profiles_csv(std::istream& in) {
  CsvLoad out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  ++line_no;
  const auto header = split(trim(line));
  if (header.size() != 3 + kHoursPerDay || trim(header[0]) != "id" || trim(header[1]) != "date" ||
      trim(header[2]) != "day_type")
    throw ParseError("header must be id,date,day_type,h00..h23", line_no);

  std::vector<RawProfile> raw;
  std::vector<std::chrono::sys_days> dates;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line));
    if (cells.size() != 3 + kHoursPerDay)
      throw ParseError("expected " + std::to_string(3 + kHoursPerDay) + " fields, got " + std::to_string(cells.size()),
                       line_no);
    RawProfile p;
    p.id = trim(cells[0]);
    if (p.id.empty()) throw ParseError("empty id", line_no);
    p.date = format_date(parse_date(trim(cells[1]), line_no));
    const std::string type = trim(cells[2]);
    if (type == "weekday" || type == "0")
      p.day_type = DayType::weekday;
    else if (type == "weekend" || type == "1")
      p.day_type = DayType::weekend;
    else
      throw ParseError("unknown day_type '" + type + "'", line_no);
    p.values.resize(kHoursPerDay);
    for (int h = 0; h < kHoursPerDay; ++h) {
      const std::string c = trim(cells[3 + h]);
      if (c.empty()) {
        p.values[h] = kNaN;
        continue;
      }
      std::size_t used = 0;
      try {
        p.values[h] = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || !std::isfinite(p.values[h])) throw ParseError("bad number '" + c + "'", line_no);
    }
    dates.push_back(parse_date(p.date, line_no));
    raw.push_back(std::move(p));
  }

  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (std::size_t i = 0; i < raw.size(); ++i) index[{raw[i].id, raw[i].date}] = i;

  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Series& x = raw[i].values;
    bool reject = false;
    for (int h = 0; h + 1 < kHoursPerDay; ++h)
      if (std::isnan(x[h]) && std::isnan(x[h + 1])) reject = true;
    if (reject) {
      out.warnings.push_back("rejected " + raw[i].id + " " + raw[i].date + ": consecutive missing values");
      continue;
    }
    RawProfile filled = raw[i];
    for (int h = 0; h < kHoursPerDay && !reject; ++h) {
      if (!std::isnan(x[h])) continue;
      double best_score = std::numeric_limits<double>::infinity();
      double best_value = kNaN;
      for (int offset : {-1, 1, -7, 7}) {
        const auto it = index.find({raw[i].id, format_date(dates[i] + std::chrono::days{offset})});
        if (it == index.end()) continue;
        const Series& c = raw[it->second].values;
        if (std::isnan(c[h])) continue;
        double score = 0.0;
        for (int n : {h - 1, h + 1}) {
          if (n < 0 || n >= kHoursPerDay || std::isnan(x[n])) continue;
          if (std::isnan(c[n])) {
            score = std::numeric_limits<double>::infinity();
            break;
          }
          score += (c[n] - x[n]) * (c[n] - x[n]);
        }
        if (score < best_score) {
          best_score = score;
          best_value = c[h];
        }
      }
      if (std::isnan(best_value)) {
        out.warnings.push_back("rejected " + raw[i].id + " " + raw[i].date + ": no candidate to fill hour " +
                               std::to_string(h));
        reject = true;
      } else {
        filled.values[h] = best_value;
      }
    }
    if (!reject) out.profiles.push_back(std::move(filled));
  }
  return out;
}

CsvLoad load_profiles_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_profiles_csv(in);
}

void write_profiles_csv(std::ostream& out, const std::vector<RawProfile>& profiles) {
  out << "id,date,day_type";
  for (int h = 0; h < kHoursPerDay; ++h) {
    char buf[8];
    std::snprintf(buf, sizeof buf, ",h%02d", h);
    out << buf;
  }
  out << '\n';
  for (const auto& p : profiles) {
    out << p.id << ',' << p.date << ',' << (p.day_type == DayType::weekend ? "weekend" : "weekday");
    for (double v : p.values) {
      out << ',';
      if (!std::isnan(v)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
      }
    }
    out << '\n';
  }
}

// ---- fitting from data ----

namespace {

std::vector<bool> infer_availability(const Series& ev) {
  std::vector<bool> home(ev.size(), true);
  int first = -1, last = -1;
  for (int t = 0; t < static_cast<int>(ev.size()); ++t)
    if (ev[t] > 0.0) {
      if (first < 0) first = t;
      last = t;
    }
  for (int t = first; first >= 0 && t <= last; ++t) home[t] = false;
  return home;
}

GammaResidual fit_gamma(const std::vector<double>& r) {
  GammaResidual g;
  if (r.size() < 2) return g;
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
  double m2 = 0.0, m3 = 0.0;
  for (double v : r) {
    m2 += (v - mean) * (v - mean);
    m3 += std::pow(v - mean, 3);
  }
  m2 /= r.size();
  m3 /= r.size();
  if (m2 <= 0.0) return g;
  if (m3 > 1e-12 * std::pow(m2, 1.5)) {
    g.scale = m3 / (2.0 * m2);
    g.shape = m2 / (g.scale * g.scale);
  } else {
    // no positive skew: a large shape approaches a symmetric residual
    g.shape = 1000.0;
    g.scale = std::sqrt(m2 / g.shape);
  }
  return g;
}

}  // namespace

ComponentModel fit_component(const std::vector<RawProfile>& days, Component component, int k, std::uint64_t seed,
                             int ev_intervals) {
  if (days.empty()) throw InsufficientData("insufficient data: no profiles");
  ComponentModel m;
  m.component = component;
  std::vector<int> bank_of(days.size(), 0);
  std::vector<double> lambda(days.size());
  for (std::size_t i = 0; i < days.size(); ++i) lambda[i] = daily_total(days[i].values);

  auto make_day = [&](const RawProfile& p) {
    NormalisedDay d{normalise(p.values), {}};
    if (component == Component::ev) d.at_home = infer_availability(p.values);
    return d;
  };

  if (component == Component::pv) {
    for (std::size_t i = 0; i < days.size(); ++i) {
      bank_of[i] = month_of(days[i].date);
      m.bank.banks[bank_of[i]].push_back(make_day(days[i]));
    }
  } else {
    for (int w = 0; w < kDayTypes; ++w) {
      std::vector<std::size_t> members;
      std::vector<Series> shapes;
      for (std::size_t i = 0; i < days.size(); ++i)
        if (static_cast<int>(days[i].day_type) == w) {
          members.push_back(i);
          shapes.push_back(normalise(days[i].values));
        }
      const auto fit = fit_clusters(shapes, k, component == Component::ev ? FeatureSet::ev : FeatureSet::load,
                                    seed + static_cast<std::uint64_t>(w));
      m.clusters.centroids[w] = fit.centroids;
      for (std::size_t j = 0; j < members.size(); ++j) {
        bank_of[members[j]] = bank_key(fit.assignments[j], static_cast<DayType>(w));
        m.bank.banks[bank_of[members[j]]].push_back(make_day(days[members[j]]));
      }
    }
    for (int w = 0; w < kDayTypes; ++w)
      for (int w2 = 0; w2 < kDayTypes; ++w2) m.clusters.transitions[w][w2].assign(k, Series(k, 0.0));
  }

  // consecutive days of the same id
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (std::size_t i = 0; i < days.size(); ++i) index[{days[i].id, days[i].date}] = i;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < days.size(); ++i) {
    const auto it = index.find({days[i].id, format_date(parse_date(days[i].date, 0) + std::chrono::days{1})});
    if (it != index.end()) pairs.emplace_back(i, it->second);
  }

  if (component != Component::pv) {
    for (auto [a, b] : pairs) {
      const int w = static_cast<int>(days[a].day_type), w2 = static_cast<int>(days[b].day_type);
      m.clusters.transitions[w][w2][bank_of[a] % kMaxClusters][bank_of[b] % kMaxClusters] += 1.0;
    }
    for (auto& by_w : m.clusters.transitions)
      for (auto& mat : by_w)
        for (auto& row : mat) {
          if (std::accumulate(row.begin(), row.end(), 0.0) <= 0.0) std::fill(row.begin(), row.end(), 1.0);
          normalise_row(row);
        }
  }

  m.scaling.lambda_min = 0.0;
  m.scaling.lambda_max = *std::max_element(lambda.begin(), lambda.end());
  if (component == Component::ev) {
    auto& s = m.scaling;
    s.kind = ScalingModel::Kind::discrete_matrix;
    s.edges.resize(ev_intervals + 1);
    const double top = std::max(s.lambda_max, 1e-9) * (1.0 + 1e-9);
    for (int i = 0; i <= ev_intervals; ++i) s.edges[i] = top * i / ev_intervals;
    std::vector<Series> marginal(ev_intervals, Series(ev_intervals, 0.0));
    std::map<std::pair<int, int>, std::vector<Series>> counts;
    for (auto [a, b] : pairs) {
      const int i = s.interval_of(lambda[a]), j = s.interval_of(lambda[b]);
      marginal[i][j] += 1.0;
      auto& mat = counts[{bank_of[a], bank_of[b]}];
      if (mat.empty()) mat.assign(ev_intervals, Series(ev_intervals, 0.0));
      mat[i][j] += 1.0;
    }
    for (int i = 0; i < ev_intervals; ++i) {
      if (std::accumulate(marginal[i].begin(), marginal[i].end(), 0.0) <= 0.0) marginal[i][i] = 1.0;
      normalise_row(marginal[i]);
    }
    constexpr double kMinRowCount = 5.0;
    for (auto& [key, mat] : counts) {
      for (auto& row : mat) {
        if (std::accumulate(row.begin(), row.end(), 0.0) < kMinRowCount)
          row.clear();
        else
          normalise_row(row);
      }
    }
    s.marginal = std::move(marginal);
    s.matrix = std::move(counts);
  } else {
    m.scaling.kind = ScalingModel::Kind::gamma_residual;
    std::map<std::pair<int, int>, std::vector<double>> residuals;
    std::vector<double> all;
    for (auto [a, b] : pairs) {
      residuals[{bank_of[a], bank_of[b]}].push_back(lambda[b] - lambda[a]);
      all.push_back(lambda[b] - lambda[a]);
    }
    m.scaling.fallback_gamma = fit_gamma(all);
    for (const auto& [key, r] : residuals)
      if (r.size() >= 10) m.scaling.gamma[key] = fit_gamma(r);
  }
  m.validate();
  return m;
}

}  // namespace flexq::profiles
