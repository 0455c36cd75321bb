#ifndef MSBL_ENVIRONMENTS_TOY_HPP_
#define MSBL_ENVIRONMENTS_TOY_HPP_

#include <vector>

#include "msbl/environments/multiscale.hpp"
#include "msbl/policies.hpp"

namespace msbl {

/// k-of-n item selection with a sparse long-term reward.
///
/// Each context's relevance table puts its preferred item just outside the
/// unboosted top-k. The macro action adds `boost * direction(x)` to the
/// relevances; the direction raises the preferred item and, more steeply, an
/// "overtaker" item, so exactly one boost magnitude selects the preferred
/// item.
struct ToyEnvSpec {
  int n_items = 10;
  int context_count = 2;
  int k = 2;
  int horizon = 5;
  int boost_levels = 8;
  double max_boost = 0.7;
  /// Boost-level index that works for each context.
  std::vector<int> target_level = {3, 5};

  void validate() const;
};

class ToyEnv final : public MultiScaleEnv {
 public:
  explicit ToyEnv(ToyEnvSpec spec = {});

  std::string name() const override { return "toy"; }
  std::vector<LevelSpec> levels() const override;
  bool level_learned(int level) const override { return level != 1; }
  int group_count(int) const override { return spec_.context_count; }
  ContextSample sample_context(int level, Rng& rng, std::optional<int> group = std::nullopt) const override;
  StepOutcome step(int level, const ContextSample& x, int action, std::span<const int> upper,
                   LowerController& lower, Rng& rng) const override;
  void dump_ground_truth(std::ostream& out) const override;

  const ToyEnvSpec& spec() const { return spec_; }
  int micro_action_count() const { return static_cast<int>(subsets_.size()); }
  const std::vector<int>& subset(int action) const { return subsets_.at(static_cast<std::size_t>(action)); }
  int subset_index(std::vector<int> items) const;
  double boost_value(int level) const;
  std::vector<MacroAction> macro_actions() const;
  int preferred_item(int context) const { return preferred_[static_cast<std::size_t>(context)]; }
  const Vector& relevance(int context) const { return relevance_[static_cast<std::size_t>(context)]; }
  const Vector& boost_direction(int context) const { return direction_[static_cast<std::size_t>(context)]; }
  ContextSample context(int c) const;

  /// Built-in micro policy: top-k items by boosted relevance, ties by index.
  std::vector<int> micro_select(int context, int boost_level) const;
  bool contains_preferred(int context, int micro_action) const;
  /// Mean relevance of the selected items.
  double micro_reward(int context, int micro_action) const;
  /// Macro reward of one context under a fixed boost (deterministic).
  double macro_reward(int context, int boost_level) const;
  /// Expected macro reward of a macro policy (contexts uniform).
  double expected_macro_value(const StochasticPolicy& policy) const;

 private:
  ToyEnvSpec spec_;
  std::vector<std::vector<int>> subsets_;
  std::vector<Vector> relevance_;
  std::vector<Vector> direction_;
  std::vector<int> preferred_;
};

/// Fraction of the steps in which `preferred` was among the selected items.
double toy_long_term_reward(const std::vector<std::vector<int>>& trajectory, int preferred, int horizon = 5);

/// All k-subsets of {0..n-1} in lexicographic order.
std::vector<std::vector<int>> k_subsets(int n, int k);

}  // namespace msbl

#endif  // MSBL_ENVIRONMENTS_TOY_HPP_
