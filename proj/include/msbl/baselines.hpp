#ifndef MSBL_BASELINES_HPP_
#define MSBL_BASELINES_HPP_

#include <optional>
#include <vector>

#include "msbl/environments/toy.hpp"
#include "msbl/msbl.hpp"

namespace msbl {

UniformPolicy uniform_policy(int action_count);
FixedActionPolicy fixed_macro_policy(int action_count, int j);

struct SkylineEntry {
  int group = 0;
  int action = 0;
  double value = 0.0;
  double standard_error = 0.0;
};

struct Skyline {
  std::vector<SkylineEntry> groups;
  /// Per-group values[group][action].
  std::vector<std::vector<double>> values;
  /// Mean over groups (groups are equally likely in every environment here).
  double value = 0.0;
  double standard_error = 0.0;
};

/// Best action per ground-truth group at `level`, estimated from
/// `episodes` steps per (group, action); exact when the environment is
/// deterministic. Ties go to the lowest index.
Skyline oracle_skyline(const MultiScaleEnv& env, int level, LowerController& lower, std::size_t episodes,
                       const Rng& rng);

/// Tabular action values over states (context, t).
class QTable {
 public:
  QTable(int contexts, int horizon, int actions);
  double& at(int context, int t, int action);
  double at(int context, int t, int action) const;
  /// Argmax with ties to the lowest index.
  int greedy(int context, int t) const;
  int contexts() const { return contexts_; }
  int horizon() const { return horizon_; }
  int actions() const { return actions_; }

 private:
  int contexts_, horizon_, actions_;
  std::vector<double> q_;
};

struct QLearningConfig {
  double alpha = 0.1;
  double gamma = 1.0;
  double epsilon_start = 0.1;
  double epsilon_end = 0.01;
  long episodes = 20000;
  /// Episodes over which epsilon decays linearly; `episodes` when 0.
  long decay_episodes = 0;
  long eval_every = 100;
  /// Stop once the greedy value reaches this target (never when unset).
  std::optional<double> stop_at;
};

struct CurvePoint {
  long episode = 0;
  double value = 0.0;
};

struct QLearningResult {
  QTable table;
  std::vector<CurvePoint> curve;
  /// First checkpoint at which the greedy value reached `stop_at`.
  std::optional<long> reached_at;
};

/// One-step Q-learning on the toy environment as an episodic MDP: a
/// context is drawn, T subsets are chosen, and the long-term reward arrives
/// at the end.
QLearningResult q_learning(const ToyEnv& env, const QLearningConfig& config, Rng& rng);
/// Expected long-term reward of the greedy policy (exact).
double greedy_value(const ToyEnv& env, const QTable& q);

struct EfficiencyConfig {
  QLearningConfig q;
  /// Episodes used to estimate the Q-learning asymptote.
  long asymptote_episodes = 200000;
  double reach_tolerance = 0.02;
  /// Explicit target value; the asymptote minus the tolerance when unset.
  std::optional<double> target;
  std::vector<std::size_t> macro_budgets = {8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024};
  LevelConfig macro_level;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct EfficiencyResult {
  double target = 0.0;
  std::vector<std::optional<long>> q_episodes;           // per seed; nullopt = censored
  std::vector<std::optional<std::size_t>> msbl_samples;  // per seed
  std::vector<std::vector<CurvePoint>> q_curves;         // per seed
  std::vector<QTable> q_tables;                          // per seed, after the asymptote run
  double n0 = 0.0;
  double n_l2 = 0.0;
  double ratio = 0.0;
  bool censored = false;
};

/// Two-level MSBL on the toy environment with `samples` macro samples.
SoftmaxPolicy train_toy_macro(const ToyEnv& env, const LevelConfig& macro_level, std::size_t samples, const Rng& seed);

/// n0 / n^{L2} where both counts are medians over seeds of the samples
/// needed to reach the Q-learning asymptote minus the tolerance.
EfficiencyResult sample_efficiency_ratio(const ToyEnv& env, const EfficiencyConfig& config, const Rng& rng);

/// Median of the uncensored values, or nullopt when more than half are censored.
std::optional<double> censored_median(std::vector<std::optional<double>> values);

}  // namespace msbl

#endif  // MSBL_BASELINES_HPP_
