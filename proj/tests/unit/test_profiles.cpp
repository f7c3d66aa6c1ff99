#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <limits>
#include <sstream>

#include "flexq/env.hpp"
#include "flexq/profiles.hpp"

using namespace flexq;
using namespace flexq::profiles;

namespace {

double partition_inertia(const std::vector<Series>& x, unsigned mask) {
  double total = 0.0;
  for (unsigned side = 0; side < 2; ++side) {
    Series mean(x[0].size(), 0.0);
    int n = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (((mask >> i) & 1u) == side) {
        ++n;
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += x[i][j];
      }
    if (n == 0) return std::numeric_limits<double>::infinity();
    for (double& m : mean) m /= n;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (((mask >> i) & 1u) == side)
        for (std::size_t j = 0; j < mean.size(); ++j) total += (x[i][j] - mean[j]) * (x[i][j] - mean[j]);
  }
  return total;
}

ComponentModel single_profile_model(double scale) {
  ComponentModel m;
  m.component = Component::load;
  Series shape(kHoursPerDay, 1.0 / kHoursPerDay);
  shape[3] += 0.02;
  shape[4] -= 0.02;
  for (int w = 0; w < kDayTypes; ++w) {
    m.clusters.centroids[w] = {shape};
    m.bank.banks[bank_key(0, static_cast<DayType>(w))] = {{shape, {}}};
    for (int w2 = 0; w2 < kDayTypes; ++w2) m.clusters.transitions[w][w2] = {{1.0}};
  }
  m.scaling.fallback_gamma = {2.0, scale};
  m.scaling.lambda_max = 1e6;
  return m;
}

std::string csv_row(const std::string& id, const std::string& date, const Series& v) {
  std::ostringstream os;
  os << id << ',' << date << ",weekday";
  for (double x : v) {
    os << ',';
    if (!std::isnan(x)) os << x;
  }
  return os.str();
}

std::string header() {
  std::string h = "id,date,day_type";
  for (int i = 0; i < kHoursPerDay; ++i) h += (i < 10 ? ",h0" : ",h") + std::to_string(i);
  return h;
}

}  // namespace

TEST_CASE("single cluster centroid is the mean") {
  std::vector<Series> x{{0.2, 0.8}, {0.6, 0.4}, {0.4, 0.6}};
  const auto fit = fit_clusters(x, 1, FeatureSet::raw, 1);
  CHECK(fit.centroids[0][0] == doctest::Approx(0.4));
  CHECK(fit.centroids[0][1] == doctest::Approx(0.6));
}

TEST_CASE("two separated clouds match the brute-force best partition") {
  std::vector<Series> x{{0.0, 0.1}, {0.2, 0.0}, {0.1, 0.2}, {0.15, 0.05},
                        {5.0, 5.1}, {5.2, 4.9}, {4.9, 5.0}, {5.1, 5.2}};
  double best = std::numeric_limits<double>::infinity();
  unsigned best_mask = 0;
  for (unsigned mask = 1; mask < (1u << x.size()) - 1; ++mask) {
    const double v = partition_inertia(x, mask);
    if (v < best) {
      best = v;
      best_mask = mask;
    }
  }
  const auto fit = fit_clusters(x, 2, FeatureSet::raw, 42);
  CHECK(fit.inertia == doctest::Approx(best));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      CHECK((fit.assignments[i] == fit.assignments[j]) == (((best_mask >> i) & 1u) == ((best_mask >> j) & 1u)));
}

TEST_CASE("clustering needs enough profiles") {
  CHECK_THROWS_AS(fit_clusters({{1.0}}, 2, FeatureSet::raw, 1), InsufficientData);
}

TEST_CASE("k-means on a synthetic load bank is seed-stable with non-empty clusters") {
  Rng rng(9);
  SyntheticConfig cfg;
  const auto models = generate_synthetic_bank(cfg, rng);
  std::vector<Series> days;
  for (const auto& [key, bank] : models.load.bank.banks)
    if (key < kMaxClusters)
      for (const auto& d : bank) days.push_back(d.shape);
  const auto a = fit_clusters(days, 4, FeatureSet::load, 17);
  const auto b = fit_clusters(days, 4, FeatureSet::load, 17);
  CHECK(a.assignments == b.assignments);
  for (int c = 0; c < 4; ++c) CHECK(std::count(a.assignments.begin(), a.assignments.end(), c) > 0);
  for (const auto& c : a.centroids) CHECK(daily_total(c) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("load features") {
  Series x(kHoursPerDay, 0.0);
  x[18] = 0.5;
  x[8] = 0.5;
  const auto f = features(x, FeatureSet::load);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == 0.5);
  CHECK(f[1] == doctest::Approx(8.0 / 24.0));
  CHECK(f[2] == doctest::Approx(0.5 / 3.0));
  CHECK(f[3] == doctest::Approx(0.5 / 5.0));
  CHECK(features(x, FeatureSet::ev).size() == 17);
}

TEST_CASE("degenerate chain returns lambda times the profile") {
  const auto m = single_profile_model(0.0);
  Rng rng(1);
  const auto draw = next_day({0, DayType::weekday, 7.0}, DayType::weekend, m, rng);
  const auto& shape = m.bank.at(bank_key(0, DayType::weekend))[0].shape;
  CHECK(draw.state.lambda == 7.0);
  for (int t = 0; t < kHoursPerDay; ++t) CHECK(draw.values[t] == shape[t] * 7.0);
  CHECK(daily_total(draw.values) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("deterministic transition row") {
  Rng rng(2);
  SyntheticConfig cfg;
  auto models = generate_synthetic_bank(cfg, rng);
  for (auto& by_w : models.load.clusters.transitions)
    for (auto& mat : by_w) mat[0] = {0.0, 1.0, 0.0, 0.0};
  for (int i = 0; i < 200; ++i)
    CHECK(next_day({0, DayType::weekday, 10.0}, DayType::weekday, models.load, rng).state.cluster == 1);
}

TEST_CASE("gamma residual has zero mean") {
  const auto m = single_profile_model(0.8);
  Rng rng(3);
  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = next_day({0, DayType::weekday, 100.0}, DayType::weekday, m, rng).state.lambda - 100.0;
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean) < 3.0 * se);
  // shape 2, scale 0.8 gives variance 1.28
  CHECK(sum2 / n == doctest::Approx(1.28).epsilon(0.05));
}

TEST_CASE("cluster transition frequencies match the model") {
  Rng rng(4);
  SyntheticConfig cfg;
  const auto models = generate_synthetic_bank(cfg, rng);
  const int k = cfg.clusters;
  std::vector<Series> counts(k, Series(k, 0.0));
  ChainState s{0, DayType::weekday, 10.0};
  for (int day = 0; day < 20000; ++day) {
    const auto d = next_day(s, DayType::weekday, models.load, rng);
    counts[s.cluster][d.state.cluster] += 1.0;
    s = d.state;
  }
  for (int a = 0; a < k; ++a) {
    const double n = std::accumulate(counts[a].begin(), counts[a].end(), 0.0);
    REQUIRE(n > 100);
    for (int b = 0; b < k; ++b) {
      const double p = models.load.clusters.row(DayType::weekday, DayType::weekday, a)[b];
      const double se = std::sqrt(p * (1.0 - p) / n);
      CHECK(std::abs(counts[a][b] / n - p) <= 3.0 * se + 1e-12);
    }
  }
}

TEST_CASE("synthetic bank invariants") {
  SUBCASE("default config") {
    Rng rng(5);
    SyntheticConfig cfg;
    const auto m = generate_synthetic_bank(cfg, rng);
    CHECK_NOTHROW(m.load.validate());
    CHECK_NOTHROW(m.ev.validate());
    CHECK_NOTHROW(m.pv.validate());
    CHECK(m.ev.scaling.intervals() == 50);
  }
  SUBCASE("one profile per bank gives a deterministic chain given the cluster path") {
    Rng rng(6);
    SyntheticConfig cfg;
    cfg.bank_size = 1;
    cfg.correlation = 1.0;
    const auto m = generate_synthetic_bank(cfg, rng);
    for (int i = 0; i < 20; ++i) {
      const auto d = next_day({2, DayType::weekday, 9.0}, DayType::weekday, m.load, rng);
      const auto& only = m.load.bank.at(bank_key(d.state.cluster, DayType::weekday));
      REQUIRE(only.size() == 1);
      for (int t = 0; t < kHoursPerDay; ++t) CHECK(d.values[t] == only[0].shape[t] * 9.0);
    }
  }
  SUBCASE("full correlation keeps every scaling factor constant") {
    Rng rng(7);
    SyntheticConfig cfg;
    cfg.correlation = 1.0;
    const auto m = generate_synthetic_bank(cfg, rng);
    HouseholdChain chain(m, cfg, rng);
    const auto first = chain.next(rng);
    const double load = daily_total(first.household_demand), pv = daily_total(first.pv_generation);
    for (int i = 0; i < 30; ++i) {
      const auto d = chain.next(rng);
      CHECK(daily_total(d.household_demand) == doctest::Approx(load).epsilon(1e-12));
      CHECK(daily_total(d.pv_generation) == doctest::Approx(pv).epsilon(1e-12));
    }
  }
}

TEST_CASE("chained household days are valid and chargeable") {
  Rng rng(8);
  SyntheticConfig cfg;
  const auto m = generate_synthetic_bank(cfg, rng);
  HouseholdChain chain(m, cfg, rng);
  const env::BatteryParams battery;
  int weekend = 0;
  for (int i = 0; i < 400; ++i) {
    const int idx = chain.day_index();
    const auto d = chain.next(rng);
    CHECK_NOTHROW(d.validate());
    CHECK_NOTHROW(env::battery_envelope(d, battery));
    CHECK(daily_total(d.household_demand) >= cfg.load_lambda.first - 1e-9);
    CHECK(daily_total(d.household_demand) <= cfg.load_lambda.second + 1e-9);
    if ((2 + idx) % 7 >= 5) ++weekend;
  }
  CHECK(weekend > 100);
}

TEST_CASE("CSV round trip") {
  std::vector<RawProfile> in;
  for (int d = 1; d <= 3; ++d) {
    RawProfile p;
    p.id = "h1";
    p.date = "2020-01-0" + std::to_string(d);
    p.values.resize(kHoursPerDay);
    for (int h = 0; h < kHoursPerDay; ++h) p.values[h] = 0.1 * h + d / 3.0;
    in.push_back(p);
  }
  in[2].day_type = DayType::weekend;
  std::stringstream ss;
  write_profiles_csv(ss, in);
  const auto out = parse_profiles_csv(ss);
  REQUIRE(out.profiles.size() == 3);
  CHECK(out.warnings.empty());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.profiles[i].id == in[i].id);
    CHECK(out.profiles[i].date == in[i].date);
    CHECK(out.profiles[i].day_type == in[i].day_type);
    CHECK(out.profiles[i].values == in[i].values);
  }
}

TEST_CASE("missing value filling") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SUBCASE("flat neighbours") {
    Series flat(kHoursPerDay, 0.5), gap = flat;
    gap[12] = nan;
    std::stringstream ss(header() + "\n" + csv_row("a", "2020-01-01", flat) + "\n" + csv_row("a", "2020-01-02", gap) +
                         "\n");
    const auto out = parse_profiles_csv(ss);
    REQUIRE(out.profiles.size() == 2);
    CHECK(out.profiles[1].values[12] == 0.5);
  }
  SUBCASE("candidate with the smallest neighbour mismatch wins") {
    // target neighbours at 11 and 13 are 1.0 and 2.0
    Series target(kHoursPerDay, 1.0);
    target[13] = 2.0;
    target[12] = nan;
    Series day_before(kHoursPerDay, 0.0), week_before(kHoursPerDay, 0.0);
    day_before[11] = 1.5;  // (0.5)^2 + (2.0)^2 = 4.25
    day_before[13] = 0.0;
    day_before[12] = 7.0;
    week_before[11] = 0.0;  // (1.0)^2 + (0.5)^2 = 1.25
    week_before[13] = 1.5;
    week_before[12] = 3.0;
    std::stringstream ss(header() + "\n" + csv_row("a", "2020-01-01", week_before) + "\n" +
                         csv_row("a", "2020-01-07", day_before) + "\n" + csv_row("a", "2020-01-08", target) + "\n");
    const auto out = parse_profiles_csv(ss);
    REQUIRE(out.profiles.size() == 3);
    CHECK(out.profiles[2].values[12] == 3.0);
  }
  SUBCASE("two consecutive gaps reject the day") {
    Series flat(kHoursPerDay, 0.5), gap = flat;
    gap[5] = gap[6] = nan;
    std::stringstream ss(header() + "\n" + csv_row("a", "2020-01-01", flat) + "\n" + csv_row("a", "2020-01-02", gap) +
                         "\n");
    const auto out = parse_profiles_csv(ss);
    CHECK(out.profiles.size() == 1);
    REQUIRE(out.warnings.size() == 1);
    CHECK(out.warnings[0].find("2020-01-02") != std::string::npos);
  }
}

TEST_CASE("malformed rows report their line") {
  Series flat(kHoursPerDay, 0.5);
  std::string bad = csv_row("a", "2020-01-02", flat);
  bad.replace(bad.rfind("0.5"), 3, "abc");
  std::stringstream ss(header() + "\n" + csv_row("a", "2020-01-01", flat) + "\n" + bad + "\n");
  try {
    parse_profiles_csv(ss);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::stringstream short_row(header() + "\nfoo,2020-01-01,weekday,1,2\n");
  CHECK_THROWS_AS(parse_profiles_csv(short_row), ParseError);
}

TEST_CASE("models fitted from ingested data satisfy the invariants") {
  Rng rng(10);
  SyntheticConfig cfg;
  const auto models = generate_synthetic_bank(cfg, rng);
  HouseholdChain chain(models, cfg, rng);
  std::vector<RawProfile> load, ev, pv;
  for (int d = 0; d < 120; ++d) {
    const auto day = chain.next(rng);
    const auto date = std::chrono::sys_days{std::chrono::year{2020} / 1 / 1} + std::chrono::days{d};
    const std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    const DayType w = (2 + d) % 7 >= 5 ? DayType::weekend : DayType::weekday;
    load.push_back({"x", buf, w, day.household_demand});
    ev.push_back({"x", buf, w, day.ev_demand});
    pv.push_back({"x", buf, w, day.pv_generation});
  }
  const auto lm = fit_component(load, Component::load, 4, 1);
  const auto em = fit_component(ev, Component::ev, 4, 1);
  const auto pm = fit_component(pv, Component::pv, 1, 1);
  CHECK_NOTHROW(lm.validate());
  CHECK_NOTHROW(em.validate());
  CHECK_NOTHROW(pm.validate());
  CHECK(pm.bank.banks.size() == 4);  // January to April
  Rng sample_rng(11);
  ChainState s{0, DayType::weekday, 10.0};
  for (int i = 0; i < 50; ++i) {
    const auto d = next_day(s, DayType::weekday, lm, sample_rng);
    CHECK(daily_total(d.values) == doctest::Approx(d.state.lambda).epsilon(1e-9));
    s = d.state;
  }
}
