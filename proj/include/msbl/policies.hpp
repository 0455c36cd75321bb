#ifndef MSBL_POLICIES_HPP_
#define MSBL_POLICIES_HPP_

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "msbl/core.hpp"
#include "msbl/network.hpp"
#include "msbl/rng.hpp"

namespace msbl {

/// Lower bound applied to positive temperatures.
inline constexpr double kMinTemperature = 1e-3;

/// softmax(beta * scores), max-shifted.
Vector softmax(const Vector& scores, double beta);
/// One-hot at the first maximal score.
Vector argmax_distribution(const Vector& scores);
double entropy(const Vector& probs);

struct TemperatureMod {
  double temperature = 1.0;
};

struct BoostMod {
  double boost = 0.0;
  std::vector<int> targets;
};

struct FeedbackWeights {
  Vector weights;
};

/// An upper-level intervention on a lower-level policy.
struct MacroAction {
  std::variant<TemperatureMod, BoostMod, FeedbackWeights> kind;
  int index = 0;

  bool is_policy_modification() const { return !std::holds_alternative<FeedbackWeights>(kind); }
  std::string label() const;

  static MacroAction temperature(double tau, int index = 0);
  static MacroAction boost(double delta, std::vector<int> targets, int index = 0);
  static MacroAction feedback(Vector weights, int index = 0);
};

/// pi(a | x) = softmax(beta * phi(x, a; theta)), phi given by a ReLU network.
/// In conditional mode the network input is the context with a macro weight
/// vector appended.
class SoftmaxPolicy final : public StochasticPolicy {
 public:
  SoftmaxPolicy(NetworkSpec spec, Vector theta, double beta, int conditional_dim = 0);

  /// Network with zero parameters: uniform for every input.
  static SoftmaxPolicy zeros(NetworkSpec spec, double beta, int conditional_dim = 0);

  int action_count() const override { return spec_.output_dim; }
  std::string id() const override;
  Vector action_distribution(const Vector& features) const override;
  std::pair<int, double> sample_action(const Vector& features, Rng& rng) const;

  /// Modified scores (boost, temperature) before the beta softmax.
  Vector scores(const Vector& features) const;
  /// Unmodified network logits.
  Vector logits(const Vector& features) const;

  /// d log pi(action | features) / d theta. Not defined for greedy policies.
  Vector log_prob_gradient(const Vector& features, int action) const;

  const NetworkSpec& spec() const { return spec_; }
  const Vector& parameters() const { return *theta_; }
  double beta() const { return beta_; }
  int context_dim() const { return spec_.input_dim - conditional_dim_; }
  int conditional_dim() const { return conditional_dim_; }
  bool conditional() const { return conditional_dim_ > 0; }
  bool greedy() const { return greedy_; }

  /// Returns a copy whose conditioning input is fixed to `weights`.
  SoftmaxPolicy conditioned_on(const Vector& weights) const;
  SoftmaxPolicy with_parameters(Vector theta) const;

  friend SoftmaxPolicy apply_policy_modification(const SoftmaxPolicy& base, const MacroAction& m);

 private:
  Vector network_input(const Vector& features) const;

  NetworkSpec spec_;
  std::shared_ptr<const Vector> theta_;
  double beta_;
  int conditional_dim_;
  // Modifications, applied as (logits + boost) / temperature.
  double inv_temperature_ = 1.0;
  bool greedy_ = false;
  Vector boost_;
  Vector conditioning_;
};

/// Policy-modification family member: temperature rescale or score boost.
SoftmaxPolicy apply_policy_modification(const SoftmaxPolicy& base, const MacroAction& m);

enum class FamilyMode { PolicyModification, FeedbackModification };

/// Finite family of lower policies indexed by macro actions.
class PolicyFamily {
 public:
  PolicyFamily(std::shared_ptr<const SoftmaxPolicy> base, std::vector<MacroAction> macro_actions, FamilyMode mode);

  int size() const { return static_cast<int>(macro_actions_.size()); }
  SoftmaxPolicy member(int index) const;
  const SoftmaxPolicy& base() const { return *base_; }
  const std::vector<MacroAction>& macro_actions() const { return macro_actions_; }
  FamilyMode mode() const { return mode_; }

 private:
  std::shared_ptr<const SoftmaxPolicy> base_;
  std::vector<MacroAction> macro_actions_;
  FamilyMode mode_;
};

/// Distribution of the conditional base policy at (features, m.weights).
Vector conditional_distribution(const PolicyFamily& family, const Vector& features, const MacroAction& m);

/// pi(a|x) = 1/|A| everywhere.
class UniformPolicy final : public StochasticPolicy {
 public:
  explicit UniformPolicy(int action_count);
  int action_count() const override { return n_; }
  Vector action_distribution(const Vector&) const override;
  std::string id() const override { return "uniform"; }

 private:
  int n_;
};

/// Degenerate distribution at a fixed action.
class FixedActionPolicy final : public StochasticPolicy {
 public:
  FixedActionPolicy(int action_count, int action);
  int action_count() const override { return n_; }
  Vector action_distribution(const Vector&) const override;
  std::string id() const override { return "fixed-" + std::to_string(action_); }
  int action() const { return action_; }

 private:
  int n_;
  int action_;
};

std::pair<int, double> sample_from(const StochasticPolicy& policy, const Vector& features, Rng& rng);

/// Header line `action_count,beta,conditional_dim,descriptor`, then one CSV
/// line of parameters.
void write_policy(std::ostream& out, const SoftmaxPolicy& policy);
SoftmaxPolicy read_policy(std::istream& in);
void save_policy(const std::string& path, const SoftmaxPolicy& policy);
SoftmaxPolicy load_policy(const std::string& path);

}  // namespace msbl

#endif  // MSBL_POLICIES_HPP_
