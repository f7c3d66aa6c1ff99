#include "flexq/marl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flexq::marl {

namespace {

constexpr const char* kAcronyms[2][4] = {{"TE", "ME", "AE", ""}, {"TO", "MO", "AO", "CO"}};

double td_update(QTable& q, int s, int a, double r, int next, bool terminal, const LearningParams& p) {
  const double target = terminal ? r : r + p.gamma * q.max(next);
  const double delta = target - q(s, a);
  const double change = learning_rate(delta, p) * delta;
  q(s, a) += change;
  q.visit(s, a);
  return change;
}

}  // namespace

StrategyConfig StrategyConfig::parse(std::string_view name) {
  std::string_view head = name;
  bool has_suffix = false;
  Structure suffix = Structure::centralised;
  if (name.size() == 4 && name[2] == '_') {
    head = name.substr(0, 2);
    has_suffix = true;
    if (name[3] == 'c')
      suffix = Structure::centralised;
    else if (name[3] == 'd')
      suffix = Structure::distributed;
    else
      throw std::invalid_argument("unknown structure suffix in strategy " + std::string(name));
  }
  for (int src = 0; src < 2; ++src)
    for (int r = 0; r < 4; ++r)
      if (head == kAcronyms[src][r] && !head.empty()) {
        StrategyConfig c;
        c.source = static_cast<Source>(src);
        c.reward = static_cast<RewardKind>(r);
        c.structure = has_suffix ? suffix : default_structure(c.source);
        return c;
      }
  throw std::invalid_argument("unknown strategy " + std::string(name));
}

Structure StrategyConfig::default_structure(Source source) {
  return source == Source::environment ? Structure::centralised : Structure::distributed;
}

std::string StrategyConfig::acronym() const {
  return kAcronyms[static_cast<int>(source)][static_cast<int>(reward)];
}

std::string StrategyConfig::name() const {
  if (structure == default_structure(source)) return acronym();
  return acronym() + (structure == Structure::centralised ? "_c" : "_d");
}

void StrategyConfig::validate() const {
  if (reward == RewardKind::count && source != Source::optimisation)
    throw std::invalid_argument("count rewards need optimisation experience");
}

void LearningParams::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(alpha0 > 0.0)) throw std::invalid_argument("alpha0 must be positive");
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in (0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (epochs < 1 || episodes < 1 || repetitions < 1) throw std::invalid_argument("epochs, episodes, repetitions >= 1");
  if (states < 1 || actions < 2) throw std::invalid_argument("at least one state and two actions");
}

QTable::QTable(int states, int actions)
    : values_(Eigen::MatrixXd::Zero(states, actions)),
      visits_(Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(states, actions)) {
  if (states < 1 || actions < 1) throw std::invalid_argument("Q-table needs at least one state and action");
}

int QTable::argmax(int s) const {
  int best = 0;
  for (int a = 1; a < actions(); ++a)
    if (values_(s, a) > values_(s, best)) best = a;
  return best;
}

void QTable::check(int s, int a) const {
  if (s < 0 || s >= states() || a < 0 || a >= actions()) throw std::out_of_range("state or action out of range");
}

int discretize_state(double cost, double day_min, double day_max, int states) {
  if (!(day_max > day_min)) return 0;
  const double x = (cost - day_min) / (day_max - day_min);
  return std::clamp(static_cast<int>(std::floor(x * states)), 0, states - 1);
}

std::vector<int> day_states(const std::vector<double>& cost, int states) {
  if (cost.empty()) return {};
  const auto [lo, hi] = std::minmax_element(cost.begin(), cost.end());
  std::vector<int> out;
  out.reserve(cost.size());
  for (double c : cost) out.push_back(discretize_state(c, *lo, *hi, states));
  return out;
}

int select_action(const QTable& q, int state, double epsilon, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < epsilon) return std::uniform_int_distribution<int>(0, q.actions() - 1)(rng);
  return q.argmax(state);
}

double learning_rate(double delta, const LearningParams& p) { return delta > 0.0 ? p.alpha0 : p.alpha0 * p.beta; }

double update_total(QTable& q0, const ExperienceTuple& e, const LearningParams& p) {
  q0.check(e.state, e.action);
  return td_update(q0, e.state, e.action, e.r_total, e.next_state, e.terminal, p);
}

double update_marginal(QTable& qdiff, const ExperienceTuple& e, const LearningParams& p) {
  if (!e.has_marginal) throw std::invalid_argument("tuple carries no marginal reward");
  qdiff.check(e.state, e.action);
  return td_update(qdiff, e.state, e.action, e.r_marginal, e.next_state, e.terminal, p);
}

double update_advantage(const QTable& q0, QTable& qa, const ExperienceTuple& e, const LearningParams& p) {
  qa.check(e.state, e.action);
  const int def = qa.actions() - 1;
  const double delta = (q0(e.state, e.action) - q0(e.state, def)) - qa(e.state, e.action);
  const double change = learning_rate(delta, p) * delta;
  qa(e.state, e.action) += change;
  qa.visit(e.state, e.action);
  return change;
}

void update_count(QTable& qcount, const ExperienceTuple& e) {
  if (!e.from_optimiser) throw std::logic_error("count updates accept optimiser experience only");
  qcount.check(e.state, e.action);
  qcount(e.state, e.action) += 1.0;
  qcount.visit(e.state, e.action);
}

double compute_marginal_reward(const env::DayRunner& runner, const std::vector<env::Decisions>& decisions,
                               std::size_t agent) {
  return runner.reward(decisions).total() - runner.counterfactual(decisions, agent, 1.0).total();
}

Learner::Learner(StrategyConfig strategy, LearningParams params, int agents)
    : strategy_(strategy), params_(params), agents_(agents) {
  strategy_.validate();
  params_.validate();
  if (agents < 1) throw std::invalid_argument("at least one agent");
  const std::size_t n = strategy_.structure == Structure::centralised ? 1 : static_cast<std::size_t>(agents);
  policy_.assign(n, QTable(params_.states, params_.actions));
  if (strategy_.reward == RewardKind::advantage) base_.assign(n, QTable(params_.states, params_.actions));
}

std::size_t Learner::slot(int agent) const {
  if (agent < 0 || agent >= agents_) throw std::out_of_range("agent index");
  return policy_.size() == 1 ? 0 : static_cast<std::size_t>(agent);
}

int Learner::explore(int agent, int state, Rng& rng) const {
  return select_action(policy(agent), state, params_.epsilon, rng);
}

void Learner::update(const std::vector<ExperienceTuple>& batch) {
  for (const auto& e : batch) {
    const std::size_t k = slot(e.agent);
    switch (strategy_.reward) {
      case RewardKind::total:
        update_total(policy_[k], e, params_);
        break;
      case RewardKind::marginal:
        update_marginal(policy_[k], e, params_);
        break;
      case RewardKind::advantage:
        update_total(base_[k], e, params_);
        update_advantage(base_[k], policy_[k], e, params_);
        break;
      case RewardKind::count:
        update_count(policy_[k], e);
        break;
    }
  }
}

Evaluation compare(const env::RewardBreakdown& reward, const env::RewardBreakdown& baseline, int agents,
                   int horizon) {
  Evaluation ev;
  ev.reward = reward;
  ev.baseline = baseline;
  const double scale = 100.0 / (static_cast<double>(agents) * horizon);
  ev.savings = (reward.total() - baseline.total()) * scale;
  ev.grid = (baseline.grid - reward.grid) * scale;
  ev.distribution = (baseline.distribution - reward.distribution) * scale;
  ev.storage = (baseline.storage - reward.storage) * scale;
  ev.emissions = (baseline.emissions - reward.emissions) * scale;
  return ev;
}

double Trajectory::final_mean(int last) const {
  if (epochs.empty()) return 0.0;
  const std::size_t n = std::min(epochs.size(), static_cast<std::size_t>(std::max(last, 1)));
  double sum = 0.0;
  for (std::size_t k = epochs.size() - n; k < epochs.size(); ++k) sum += epochs[k].evaluation.savings;
  return sum / static_cast<double>(n);
}

Trajectory train(const StrategyConfig& strategy, const LearningParams& params, ExperienceSource& source,
                 Rng& rng) {
  Trajectory tr{strategy, Learner(strategy, params, source.agents()), {}};
  tr.epochs.reserve(params.epochs);
  std::vector<ExperienceTuple> batch;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    batch.clear();
    for (int episode = 0; episode < params.episodes; ++episode) {
      auto tuples = strategy.source == Source::environment ? source.explore(tr.learner, rng)
                                                           : source.optimise(tr.learner, rng);
      batch.insert(batch.end(), tuples.begin(), tuples.end());
    }
    // agent-major, then episode, then step
    std::stable_sort(batch.begin(), batch.end(),
                     [](const ExperienceTuple& a, const ExperienceTuple& b) { return a.agent < b.agent; });
    tr.learner.update(batch);
    tr.epochs.push_back({epoch, batch.size(), source.evaluate(tr.learner, rng)});
  }
  return tr;
}

ToyScenario::ToyScenario(std::vector<std::vector<double>> rewards, int horizon, double gamma)
    : rewards_(std::move(rewards)), horizon_(horizon), gamma_(gamma) {
  if (rewards_.empty() || horizon_ < 1) throw std::invalid_argument("toy needs states and a horizon");
  for (const auto& row : rewards_)
    if (row.size() != rewards_.front().size() || row.empty()) throw std::invalid_argument("ragged toy rewards");
}

std::vector<ExperienceTuple> ToyScenario::explore(const Learner& learner, Rng& rng) {
  std::vector<ExperienceTuple> out;
  for (int t = 0; t < horizon_; ++t) {
    ExperienceTuple e;
    e.step = t;
    e.state = state_at(t);
    e.action = learner.explore(0, e.state, rng);
    e.r_total = rewards_[e.state][e.action];
    e.r_marginal = e.r_total - rewards_[e.state][rewards_[e.state].size() - 1];
    e.has_marginal = true;
    e.terminal = t + 1 == horizon_;
    e.next_state = e.terminal ? e.state : state_at(t + 1);
    out.push_back(e);
  }
  return out;
}

std::vector<ExperienceTuple> ToyScenario::optimise(const Learner& learner, Rng&) {
  const auto best = optimal_policy();
  std::vector<ExperienceTuple> out;
  for (int t = 0; t < horizon_; ++t) {
    ExperienceTuple e;
    e.step = t;
    e.state = state_at(t);
    e.action = best[e.state];
    e.r_total = rewards_[e.state][e.action];
    e.r_marginal = e.r_total - rewards_[e.state][learner.params().default_action()];
    e.has_marginal = true;
    e.terminal = t + 1 == horizon_;
    e.from_optimiser = true;
    e.next_state = e.terminal ? e.state : state_at(t + 1);
    out.push_back(e);
  }
  return out;
}

Evaluation ToyScenario::evaluate(const Learner& learner, Rng&) {
  Evaluation ev;
  ev.actions.assign(1, {});
  double greedy = 0.0, passive = 0.0;
  for (int t = 0; t < horizon_; ++t) {
    const int s = state_at(t);
    const int a = learner.greedy(0, s);
    ev.actions[0].push_back(a);
    greedy += rewards_[s][a];
    passive += rewards_[s][learner.params().default_action()];
  }
  ev.reward.grid = -greedy;
  ev.baseline.grid = -passive;
  ev.savings = 100.0 * (greedy - passive) / horizon_;
  return ev;
}

double ToyScenario::day_return(const std::vector<int>& policy) const {
  double total = 0.0, discount = 1.0;
  for (int t = 0; t < horizon_; ++t) {
    const int s = state_at(t);
    total += discount * rewards_[s][policy[s]];
    discount *= gamma_;
  }
  return total;
}

std::vector<int> ToyScenario::optimal_policy() const {
  const int S = static_cast<int>(rewards_.size());
  const int A = static_cast<int>(rewards_.front().size());
  std::vector<int> policy(S, 0), best;
  double best_value = -std::numeric_limits<double>::infinity();
  long combos = 1;
  for (int s = 0; s < S; ++s) combos *= A;
  for (long c = 0; c < combos; ++c) {
    long k = c;
    for (int s = 0; s < S; ++s, k /= A) policy[s] = static_cast<int>(k % A);
    const double v = day_return(policy);
    if (v > best_value) {
      best_value = v;
      best = policy;
    }
  }
  return best;
}

}  // namespace flexq::marl
