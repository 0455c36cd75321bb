#ifndef MSBL_ENVIRONMENTS_CONVERSATIONAL_HPP_
#define MSBL_ENVIRONMENTS_CONVERSATIONAL_HPP_

#include <cstdint>
#include <vector>

#include "msbl/environments/multiscale.hpp"
#include "msbl/policies.hpp"

namespace msbl {

/// Three-level conversational recommender with a synthetic token generator.
///
/// Level 1 picks one of `micro_actions` agents per turn; the agent's token
/// model writes a response. Level 2 picks a decoding temperature for a
/// conversation of `micro_horizon` turns. Level 3 picks a feedback weight
/// vector for a user's `l2_horizon` conversations.
struct ConvEnvSpec {
  int context_dim = 5;
  int groups = 2;
  int micro_actions = 10;
  int micro_horizon = 10;
  std::vector<double> temperatures = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  int l2_horizon = 2;
  std::vector<std::vector<double>> l3_weights = {{0.0, 1.0}, {1.0, 0.0}};
  /// Relevance weight per level-2 group.
  std::vector<double> beta_u = {0.9, 0.1};
  /// Level-3 reward mix per level-3 group.
  std::vector<double> gamma_u = {1.0, 0.0};
  double sigmoid_scale = 60.0;
  double sigmoid_shift = 0.6;
  double threshold = 0.8;
  double sigma_f = 0.1;
  int train_users = 1500;
  int test_users = 300;

  int vocabulary = 50;
  int response_length = 20;
  /// Probability of the chain successor at temperature 1.
  double chain_probability = 0.75;
  /// Best agent per level-1 group.
  std::vector<int> optimal_action = {2, 7};
  std::uint64_t construction_seed = 20240917;

  void validate() const;
};

/// Per-agent first-order token model. Agent a puts logit `chain_logit` on a
/// fixed cyclic successor of the previous token and 0 on every other token.
class ConvTokenModel {
 public:
  ConvTokenModel(int vocabulary, int agents, int length, double chain_probability, Rng construction);

  int vocabulary() const { return vocabulary_; }
  int agents() const { return static_cast<int>(successor_.size()); }
  int length() const { return length_; }
  double chain_logit() const { return chain_logit_; }
  int successor(int agent, int prev) const;

  double log_prob(int agent, int prev, int token) const;
  /// `length` tokens; logits scaled by 1/max(tau, 1e-3); tau = 0 is greedy.
  std::vector<int> generate(int agent, double tau, int prev, Rng& rng) const;

 private:
  int vocabulary_;
  int length_;
  double chain_logit_;
  std::vector<std::vector<int>> successor_;
};

/// Token a response is conditioned on: last token of `prev_tokens`, or 0.
std::vector<int> conv_generate(const ConvTokenModel& model, int agent_action, double tau,
                               const std::vector<int>& prev_tokens, Rng& rng);
/// Geometric-mean token probability under the optimal agent's model.
double conv_micro_reward(const ConvTokenModel& model, const std::vector<int>& tokens, int optimal_action,
                         int prev_token = 0);
/// One minus the fraction of 3-gram occurrences seen earlier in the
/// concatenation; 3-grams do not span response boundaries.
double diversity_score(const std::vector<std::vector<int>>& responses);
double conv_level2_reward(double mean_r1, double diversity, double beta_u, double scale = 60.0, double shift = 0.6);
double conv_parameterized_feedback(double r2, const Vector& weights, double threshold = 0.8);
double conv_level3_reward(double r2_first, double r2_second, double gamma_u, bool active);
/// Activity preference: mean level-2 reward at most `threshold`.
bool conv_activity_indicator(const std::vector<double>& r2, double threshold = 0.8);

class ConvEnv final : public MultiScaleEnv {
 public:
  explicit ConvEnv(ConvEnvSpec spec = {});

  std::string name() const override { return "conversational"; }
  std::vector<LevelSpec> levels() const override;
  int reward_component_count(int level) const override { return level == 2 ? 2 : 0; }
  int group_count(int) const override { return spec_.groups; }
  ContextSample sample_context(int level, Rng& rng, std::optional<int> group = std::nullopt) const override;
  StepOutcome step(int level, const ContextSample& x, int action, std::span<const int> upper,
                   LowerController& lower, Rng& rng) const override;
  void dump_ground_truth(std::ostream& out) const override;

  const ConvEnvSpec& spec() const { return spec_; }
  const ConvTokenModel& token_model() const { return model_; }
  const Vector& group_mean(int level, int group) const;
  std::vector<MacroAction> temperature_actions() const;
  std::vector<MacroAction> weight_actions() const;
  /// Decoding temperature implied by the actions above level 1 (0 when none).
  double decoding_temperature(std::span<const int> upper) const;

 private:
  StepOutcome step_micro(const ContextSample& x, int agent, double tau, int prev, Rng& rng,
                         std::vector<int>* tokens) const;
  StepOutcome step_conversation(const ContextSample& x, int temperature_index, std::span<const int> upper,
                                LowerController& lower, Rng& rng) const;

  ConvEnvSpec spec_;
  ConvTokenModel model_;
  std::vector<std::vector<Vector>> means_;  // [level-1][group]
};

}  // namespace msbl

#endif  // MSBL_ENVIRONMENTS_CONVERSATIONAL_HPP_
