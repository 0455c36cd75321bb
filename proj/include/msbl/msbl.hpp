#ifndef MSBL_MSBL_HPP_
#define MSBL_MSBL_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "msbl/core.hpp"
#include "msbl/environments/multiscale.hpp"
#include "msbl/estimators.hpp"
#include "msbl/network.hpp"
#include "msbl/optim.hpp"
#include "msbl/policies.hpp"

namespace msbl {

/// Training settings for one level. `mode` and `macro_actions` describe how
/// the level above acts on this level's policy and are ignored at the top.
struct LevelConfig {
  NetworkSpec architecture;  // hidden layers only; input/output sizes come from the data
  double beta = 1.0;
  OptimizerConfig optimizer;
  std::size_t samples = 1000;
  FamilyMode mode = FamilyMode::PolicyModification;
  std::vector<MacroAction> macro_actions;
  /// Logging policy; uniform over the level's actions when null.
  std::shared_ptr<const StochasticPolicy> logger;
};

class LevelStack {
 public:
  LevelStack(std::vector<LevelSpec> specs, std::vector<LevelConfig> configs);

  int size() const { return static_cast<int>(specs_.size()); }
  const LevelSpec& spec(int level) const { return specs_.at(static_cast<std::size_t>(level - 1)); }
  const LevelConfig& config(int level) const { return configs_.at(static_cast<std::size_t>(level - 1)); }
  const std::vector<LevelSpec>& specs() const { return specs_; }
  /// The bottom `levels` levels as a stack of their own.
  LevelStack truncated(int levels) const;

 private:
  std::vector<LevelSpec> specs_;
  std::vector<LevelConfig> configs_;
};

/// How a level's policy responds to the action chosen one level above.
enum class Modulation { None, Policy, Feedback };

/// One policy per level, bottom to top. A null entry means the environment
/// runs that level itself.
struct MultiScalePolicy {
  std::vector<LevelSpec> levels;
  std::vector<std::shared_ptr<const StochasticPolicy>> policies;
  std::vector<Modulation> modulation;
  std::vector<std::vector<MacroAction>> macro_actions;

  int level_count() const { return static_cast<int>(levels.size()); }
  /// Family at `level` (< top) when its policy is a trained softmax policy.
  std::optional<PolicyFamily> family(int level) const;
  /// Distribution at `level` given the upper action (ignored at the top or
  /// when the level is unmodulated).
  Vector distribution(int level, const Vector& features, std::optional<int> upper_action) const;
  /// Throws unless every level matches `env` and adjacent action spaces agree.
  void check_compatible(const MultiScaleEnv& env) const;
};

/// Runs the lower levels of a MultiScalePolicy inside environment steps.
class PolicyController final : public LowerController {
 public:
  explicit PolicyController(const MultiScalePolicy& policy) : policy_(policy) {}
  std::pair<int, double> act(int level, const ContextSample& x, std::span<const int> upper, Rng& rng) override;

 private:
  const MultiScalePolicy& policy_;
};

/// n logged interactions at `level`. For level >= 2, `lower` runs the levels
/// below; interaction i draws from `rng.substream(i)`.
LoggedDataset collect_logged_data(const MultiScaleEnv& env, int level, const StochasticPolicy& logger, std::size_t n,
                                  Rng& rng, const MultiScalePolicy* lower = nullptr);

PolicyFamily learn_micro_family(const LoggedDataset& data, FamilyMode mode, std::vector<MacroAction> macro_actions,
                                const NetworkSpec& architecture, double beta, const OptimizerConfig& opt, Rng& rng);

SoftmaxPolicy learn_macro_policy(const LoggedDataset& data, int macro_action_count, const NetworkSpec& architecture,
                                 double beta, const OptimizerConfig& opt, Rng& rng);

struct LearningResult {
  MultiScalePolicy policy;
  /// Logged data per level; empty for levels the environment runs itself.
  std::vector<LoggedDataset> datasets;
};

/// Two-level learning: micro data, micro family, macro data, macro policy.
LearningResult policy_learning_two_level(const MultiScaleEnv& env, const LevelStack& stack, const Rng& seed);

/// k-level learning, bottom-up by recursion on the stack height.
LearningResult policy_learning_recursive(const MultiScaleEnv& env, const LevelStack& stack, const Rng& seed);

struct LevelSummary {
  int level = 1;
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t episodes = 0;
};

struct EpisodeRecord {
  int group = -1;
  int action = -1;
  std::vector<double> level_means;
};

struct InferenceResult {
  std::vector<LevelSummary> levels;
  std::vector<EpisodeRecord> episodes;
};

/// Top-down rollout of `episodes` top-level steps; episode e uses
/// `rng.substream(e)`.
InferenceResult multiscale_inference(const MultiScalePolicy& policy, const MultiScaleEnv& env, std::size_t episodes,
                                     const Rng& rng);

/// Same rollout with an arbitrary controller and top-level chooser.
InferenceResult rollout(const MultiScaleEnv& env, int top_level, const StochasticPolicy& top, LowerController& lower,
                        std::size_t episodes, const Rng& rng);

/// Policy with every level empty and the stack's modulation and macro actions.
MultiScalePolicy policy_shape(const LevelStack& stack);

/// Writes policy-L<k>.csv and data-L<k>.csv into `dir`.
void save_run(const std::string& dir, const LearningResult& result);
/// Reads the trained softmax policies written by save_run into `shape`'s
/// learned levels.
MultiScalePolicy load_run(const std::string& dir, MultiScalePolicy shape);

}  // namespace msbl

#endif  // MSBL_MSBL_HPP_
