#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "flexq/env.hpp"
#include "flexq/experience.hpp"

namespace flexq::marl {

using Rng = std::mt19937_64;

enum class Source { environment, optimisation };
enum class RewardKind { total, marginal, advantage, count };
enum class Structure { distributed, centralised };

struct StrategyConfig {
  Source source = Source::environment;
  RewardKind reward = RewardKind::total;
  Structure structure = Structure::centralised;

  /// Accepts TE, ME, AE, TO, MO, AO, CO with an optional _c or _d structure suffix.
  /// Without a suffix, environment strategies are centralised and optimisation strategies distributed.
  static StrategyConfig parse(std::string_view name);
  static Structure default_structure(Source source);

  std::string acronym() const;
  /// Acronym, suffixed only when the structure differs from the default.
  std::string name() const;
  bool needs_marginal() const { return reward == RewardKind::marginal; }
  void validate() const;
};

struct LearningParams {
  double gamma = 0.99;
  double alpha0 = 0.01;
  double beta = 0.5;
  double epsilon = 0.5;
  int epochs = 50;
  int episodes = 2;      // per epoch
  int repetitions = 10;
  int states = 3;
  int actions = 10;

  int default_action() const { return actions - 1; }
  void validate() const;
};

class QTable {
 public:
  explicit QTable(int states = 3, int actions = 10);

  int states() const { return static_cast<int>(values_.rows()); }
  int actions() const { return static_cast<int>(values_.cols()); }
  double operator()(int s, int a) const { return values_(s, a); }
  double& operator()(int s, int a) { return values_(s, a); }
  std::int64_t visits(int s, int a) const { return visits_(s, a); }
  void visit(int s, int a) { ++visits_(s, a); }

  double max(int s) const { return values_.row(s).maxCoeff(); }
  /// Highest value in row s, ties to the lowest action index.
  int argmax(int s) const;
  double sum() const { return values_.sum(); }
  const Eigen::MatrixXd& values() const { return values_; }
  void check(int s, int a) const;

 private:
  Eigen::MatrixXd values_;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> visits_;
};

/// Uniform bucketing of cost over [day_min, day_max], the maximum in the top bucket. A flat day is bucket 0.
int discretize_state(double cost, double day_min, double day_max, int states = 3);
std::vector<int> day_states(const std::vector<double>& cost, int states = 3);

/// Greedy with probability 1 - epsilon, uniform otherwise.
int select_action(const QTable& q, int state, double epsilon, Rng& rng);

/// alpha0 for positive errors, alpha0 * beta otherwise.
double learning_rate(double delta, const LearningParams& p);

/// Each update returns the applied change alpha * delta.
double update_total(QTable& q0, const ExperienceTuple& e, const LearningParams& p);
double update_marginal(QTable& qdiff, const ExperienceTuple& e, const LearningParams& p);
double update_advantage(const QTable& q0, QTable& qa, const ExperienceTuple& e, const LearningParams& p);
/// Requires optimiser experience.
void update_count(QTable& qcount, const ExperienceTuple& e);

/// Current-step total reward minus the reward with agent i on the default action.
double compute_marginal_reward(const env::DayRunner& runner, const std::vector<env::Decisions>& decisions,
                               std::size_t agent);

/// Tables of one strategy: one per agent when distributed, a single shared one when centralised.
class Learner {
 public:
  Learner(StrategyConfig strategy, LearningParams params, int agents);

  const StrategyConfig& strategy() const { return strategy_; }
  const LearningParams& params() const { return params_; }
  int agents() const { return agents_; }
  std::size_t tables() const { return policy_.size(); }

  /// Table acting for the agent.
  const QTable& policy(int agent) const { return policy_[slot(agent)]; }
  const QTable& policy_table(std::size_t k) const { return policy_[k]; }
  /// Total-reward table kept alongside the advantage table.
  const QTable& base(int agent) const { return base_[slot(agent)]; }

  int greedy(int agent, int state) const { return policy(agent).argmax(state); }
  int explore(int agent, int state, Rng& rng) const;

  /// Applies a batch in the given order.
  void update(const std::vector<ExperienceTuple>& batch);

 private:
  std::size_t slot(int agent) const;

  StrategyConfig strategy_;
  LearningParams params_;
  int agents_;
  std::vector<QTable> policy_;
  std::vector<QTable> base_;
};

/// Greedy evaluation of one day against the passive baseline. Savings in pence per agent-hour.
struct Evaluation {
  double savings = 0.0;
  double grid = 0.0;          // includes emissions
  double distribution = 0.0;
  double storage = 0.0;
  double emissions = 0.0;
  double upper_bound = 0.0;   // savings of the omniscient schedule, when computed
  bool has_upper_bound = false;
  env::RewardBreakdown reward;
  env::RewardBreakdown baseline;
  env::ConstraintReport constraints;
  std::vector<std::vector<int>> actions;  // [agent][step]
};

Evaluation compare(const env::RewardBreakdown& reward, const env::RewardBreakdown& baseline, int agents,
                   int horizon);

/// Where training tuples and evaluation days come from.
class ExperienceSource {
 public:
  virtual ~ExperienceSource() = default;
  virtual int agents() const = 0;
  virtual int horizon() const = 0;
  /// One episode acting epsilon-greedily on the learner's tables.
  virtual std::vector<ExperienceTuple> explore(const Learner& learner, Rng& rng) = 0;
  /// One episode read off an omniscient day-horizon schedule.
  virtual std::vector<ExperienceTuple> optimise(const Learner& learner, Rng& rng) = 0;
  /// Greedy policies on a fresh day.
  virtual Evaluation evaluate(const Learner& learner, Rng& rng) = 0;
};

struct EpochRecord {
  int epoch = 0;
  std::size_t tuples = 0;
  Evaluation evaluation;
};

struct Trajectory {
  StrategyConfig strategy;
  Learner learner;
  std::vector<EpochRecord> epochs;

  /// Mean evaluation savings over the last n epochs.
  double final_mean(int last = 10) const;
};

/// Explore, update and evaluate for params.epochs epochs.
Trajectory train(const StrategyConfig& strategy, const LearningParams& params, ExperienceSource& source,
                 Rng& rng);

/// Deterministic single-agent day whose states alternate 0, 1, 0, ... and whose reward
/// depends only on the state and the action.
class ToyScenario : public ExperienceSource {
 public:
  ToyScenario(std::vector<std::vector<double>> rewards, int horizon = 4, double gamma = 0.99);

  int agents() const override { return 1; }
  int horizon() const override { return horizon_; }
  std::vector<ExperienceTuple> explore(const Learner& learner, Rng& rng) override;
  std::vector<ExperienceTuple> optimise(const Learner& learner, Rng& rng) override;
  Evaluation evaluate(const Learner& learner, Rng& rng) override;

  int state_at(int step) const { return step % static_cast<int>(rewards_.size()); }
  /// Discounted day return of a state-to-action map.
  double day_return(const std::vector<int>& policy) const;
  /// Best map over all |A|^|S| candidates.
  std::vector<int> optimal_policy() const;

 private:
  std::vector<std::vector<double>> rewards_;
  int horizon_;
  double gamma_;
};

}  // namespace flexq::marl
