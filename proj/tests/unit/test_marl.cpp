#include "doctest.h"

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "flexq/marl.hpp"

using namespace flexq;
using namespace flexq::marl;

namespace {

ExperienceTuple tuple(int s, int a, double r, int next = 0, bool terminal = false) {
  ExperienceTuple e;
  e.state = s;
  e.action = a;
  e.r_total = r;
  e.next_state = next;
  e.terminal = terminal;
  return e;
}

std::vector<std::vector<double>> deviation_costs() {
  std::vector<std::vector<double>> r(2, std::vector<double>(10));
  for (int a = 0; a < 10; ++a) {
    r[0][a] = -0.3 * std::abs(a - 7) / 9.0;
    r[1][a] = -0.6 * std::abs(a - 2) / 9.0;
  }
  return r;
}

}  // namespace

TEST_CASE("strategy acronyms and default structures") {
  CHECK(StrategyConfig::parse("TE").structure == Structure::centralised);
  CHECK(StrategyConfig::parse("MO").structure == Structure::distributed);
  CHECK(StrategyConfig::parse("MO_c").structure == Structure::centralised);
  CHECK(StrategyConfig::parse("AE_d").name() == "AE_d");
  CHECK(StrategyConfig::parse("AE_c").name() == "AE");
  CHECK(StrategyConfig::parse("CO").reward == RewardKind::count);
  for (const char* s : {"TE", "ME", "AE", "TO", "MO", "AO", "CO"}) CHECK(StrategyConfig::parse(s).acronym() == s);
  CHECK_THROWS_AS(StrategyConfig::parse("CE"), std::invalid_argument);
  CHECK_THROWS_AS(StrategyConfig::parse("MO_x"), std::invalid_argument);
  StrategyConfig bad{Source::environment, RewardKind::count, Structure::centralised};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("learning parameter validation") {
  LearningParams p;
  CHECK_NOTHROW(p.validate());
  p.gamma = 1.0;
  CHECK_THROWS(p.validate());
  p = {};
  p.beta = 0.0;
  CHECK_THROWS(p.validate());
  p = {};
  p.epsilon = 1.5;
  CHECK_THROWS(p.validate());
  p = {};
  p.alpha0 = 0.0;
  CHECK_THROWS(p.validate());
}

TEST_CASE("state discretisation") {
  CHECK(discretize_state(0.10, 0.10, 0.40) == 0);
  CHECK(discretize_state(0.40, 0.10, 0.40) == 2);
  CHECK(discretize_state(0.25, 0.10, 0.40) == 1);
  CHECK(discretize_state(0.3, 0.3, 0.3) == 0);
  const std::vector<double> flat(24, 0.2);
  for (int s : day_states(flat)) CHECK(s == 0);
  const auto grid = testing::two_level_grid(24);
  const auto states = day_states(grid.cost);
  CHECK(states[0] == 0);
  CHECK(states[16] == 2);
}

TEST_CASE("epsilon-greedy selection") {
  QTable q;
  Rng rng(1);
  SUBCASE("all-zero table picks the lowest index") { CHECK(select_action(q, 0, 0.0, rng) == 0); }
  SUBCASE("greedy picks the argmax") {
    q(1, 4) = 1.0;
    q(1, 6) = 1.0;
    for (int k = 0; k < 100; ++k) CHECK(select_action(q, 1, 0.0, rng) == 4);
  }
  SUBCASE("epsilon one is uniform") {
    const int draws = 10000;
    std::vector<int> freq(10, 0);
    for (int k = 0; k < draws; ++k) ++freq[select_action(q, 0, 1.0, rng)];
    const double p = 0.1, se = std::sqrt(draws * p * (1 - p));
    for (int f : freq) CHECK(std::abs(f - draws * p) < 3.0 * se);
  }
}

TEST_CASE("total reward update arithmetic") {
  const LearningParams p;
  QTable q;
  CHECK(update_total(q, tuple(0, 3, 0.0, 1), p) == 0.0);
  CHECK(q(0, 3) == 0.0);
  update_total(q, tuple(0, 3, 1.0, 1), p);
  CHECK(q(0, 3) == doctest::Approx(0.01).epsilon(1e-15));
  QTable n;
  update_total(n, tuple(0, 3, -1.0, 1), p);
  CHECK(n(0, 3) == doctest::Approx(-0.005).epsilon(1e-15));
  SUBCASE("bootstrap uses the next state's best value") {
    QTable b;
    b(2, 5) = 2.0;
    update_total(b, tuple(0, 0, 0.0, 2), p);
    CHECK(b(0, 0) == doctest::Approx(0.01 * 0.99 * 2.0));
    QTable c;
    c(2, 5) = 2.0;
    update_total(c, tuple(0, 0, 0.0, 2, true), p);
    CHECK(c(0, 0) == 0.0);
  }
}

TEST_CASE("hysteresis scales negative updates by beta exactly") {
  LearningParams p;
  for (double d : {0.25, 1.0, 3.5}) {
    QTable up, down;
    const double pos = update_total(up, tuple(0, 0, d, 0, true), p);
    const double neg = update_total(down, tuple(0, 0, -d, 0, true), p);
    CHECK(-neg == p.beta * pos);
  }
}

TEST_CASE("advantage update") {
  const LearningParams p;
  QTable q0, qa;
  q0(1, 4) = 0.5;
  q0(1, 9) = 0.2;
  update_advantage(q0, qa, tuple(1, 4, 0.0), p);
  CHECK(qa(1, 4) == doctest::Approx(0.01 * 0.3));
  SUBCASE("the default action is pulled to zero") {
    QTable a;
    a(1, 9) = 0.4;
    update_advantage(q0, a, tuple(1, 9, 0.0), p);
    CHECK(a(1, 9) == doctest::Approx(0.4 - 0.005 * 0.4));
  }
  SUBCASE("row shifts of the base table leave the greedy action unchanged") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    QTable base, shifted, qa1, qa2;
    for (int a = 0; a < 10; ++a) {
      base(0, a) = u(rng);
      shifted(0, a) = base(0, a) + 7.0;
    }
    for (int k = 0; k < 200; ++k) {
      const auto e = tuple(0, k % 10, 0.0);
      update_advantage(base, qa1, e, p);
      update_advantage(shifted, qa2, e, p);
    }
    CHECK(qa1.argmax(0) == qa2.argmax(0));
  }
}

TEST_CASE("count bookkeeping") {
  QTable q;
  auto e = tuple(2, 5, 0.0);
  e.from_optimiser = true;
  for (int k = 0; k < 7; ++k) update_count(q, e);
  CHECK(q(2, 5) == 7.0);
  CHECK(q.sum() == 7.0);
  e.action = 3;
  for (int k = 0; k < 7; ++k) update_count(q, e);
  CHECK(q.argmax(2) == 3);
  CHECK_THROWS_AS(update_count(q, tuple(0, 0, 0.0)), std::logic_error);
}

TEST_CASE("marginal reward") {
  const auto hp = testing::household(24);
  std::mt19937_64 rng(4);
  std::vector<DayProfile> days{testing::random_day(24, rng), testing::random_day(24, rng)};
  env::DayRunner runner(days, hp, testing::two_level_grid(24));
  SUBCASE("default action gives zero") {
    const auto d = runner.decide({1.0, 0.3});
    CHECK(compute_marginal_reward(runner, d, 0) == 0.0);
  }
  SUBCASE("difference against the counterfactual step") {
    const auto d = runner.decide({0.0, 0.6});
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(compute_marginal_reward(runner, d, i) ==
            runner.reward(d).total() - runner.counterfactual(d, i).total());
  }
}

TEST_CASE("learner structures") {
  LearningParams p;
  Learner c(StrategyConfig::parse("TE"), p, 5), d(StrategyConfig::parse("TO"), p, 5);
  CHECK(c.tables() == 1);
  CHECK(d.tables() == 5);
  CHECK(c.policy(0).states() == 3);
  CHECK(c.policy(4).actions() == 10);
  std::vector<ExperienceTuple> batch;
  for (int i = 0; i < 5; ++i) {
    auto e = tuple(0, 1, 1.0, 0, true);
    e.agent = i;
    batch.push_back(e);
  }
  c.update(batch);
  d.update(batch);
  CHECK(c.policy(0)(0, 1) > d.policy(0)(0, 1));
  CHECK(d.policy(3)(0, 1) == doctest::Approx(0.01));
  Learner m(StrategyConfig::parse("ME"), p, 1);
  CHECK_THROWS_AS(m.update({tuple(0, 0, 1.0)}), std::invalid_argument);
}

TEST_CASE("toy scenario training") {
  ToyScenario toy(deviation_costs(), 4);
  const auto best = toy.optimal_policy();
  CHECK(best == std::vector<int>{7, 2});
  LearningParams p;
  p.epochs = 500;
  SUBCASE("greedy policy matches the enumeration") {
    Rng rng(11);
    const auto tr = train(StrategyConfig::parse("TE"), p, toy, rng);
    CHECK(tr.epochs.back().evaluation.actions[0][0] == 7);
    CHECK(tr.epochs.back().evaluation.actions[0][1] == 2);
  }
  SUBCASE("zero exploration walks the tie rule") {
    p.epsilon = 0.0;
    p.epochs = 1;
    Rng rng(1);
    const auto tr = train(StrategyConfig::parse("TE"), p, toy, rng);
    CHECK(tr.epochs[0].evaluation.actions[0] == std::vector<int>{1, 1, 1, 1});
  }
  SUBCASE("identical seeds give identical trajectories, distinct seeds differ") {
    p.epochs = 30;
    Rng a(5), b(5), c(6);
    const auto ta = train(StrategyConfig::parse("TE"), p, toy, a);
    const auto tb = train(StrategyConfig::parse("TE"), p, toy, b);
    const auto tc = train(StrategyConfig::parse("TE"), p, toy, c);
    CHECK(ta.learner.policy(0).values() == tb.learner.policy(0).values());
    CHECK(ta.learner.policy(0).values() != tc.learner.policy(0).values());
    CHECK(ta.epochs.size() == tc.epochs.size());
  }
  SUBCASE("count strategy sums the optimiser tuples") {
    p.epochs = 12;
    Rng rng(2);
    const auto tr = train(StrategyConfig::parse("CO"), p, toy, rng);
    CHECK(tr.learner.policy(0).sum() == 12 * p.episodes * 4);
    CHECK(tr.learner.greedy(0, 0) == 7);
  }
}

TEST_CASE("evaluation bookkeeping") {
  env::RewardBreakdown base, pol;
  base.grid = 2.0;
  base.emissions = 0.5;
  base.distribution = 0.1;
  base.storage = 0.6;
  pol.grid = 1.5;
  pol.emissions = 0.4;
  pol.distribution = 0.2;
  pol.storage = 0.1;
  const auto ev = compare(pol, base, 2, 24);
  CHECK(ev.savings == doctest::Approx(ev.grid + ev.distribution + ev.storage));
  CHECK(ev.savings == doctest::Approx(100.0 * (2.7 - 1.8) / 48.0));
  CHECK(compare(base, base, 3, 24).savings == 0.0);
}
