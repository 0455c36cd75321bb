#ifndef MSBL_ENVIRONMENTS_RANKING_HPP_
#define MSBL_ENVIRONMENTS_RANKING_HPP_

#include <cstdint>
#include <vector>

#include "msbl/environments/multiscale.hpp"
#include "msbl/policies.hpp"

namespace msbl {

/// Two-level ranking environment. The built-in micro ranker shows the top-k
/// items by noisy score; the macro action boosts one item group for a
/// session of `horizon` rankings. User group u prefers item group u.
struct RankEnvSpec {
  int groups = 2;
  int items_per_group = 40;
  int horizon = 5;
  int k = 10;
  double preferred = 0.9;
  double other = 0.1;
  double sigma_s = 0.0;
  double score_lo = 0.2;
  double score_hi = 0.9;
  double boost = 1.0;
  double return_floor = 1e-3;
  /// Noise on the one-hot user-group features seen by the macro policy.
  double context_noise = 0.1;
  std::uint64_t construction_seed = 20240917;

  void validate() const;
  int item_count() const { return groups * items_per_group; }
};

struct RankStepResult {
  std::vector<int> selection;
  std::vector<int> clicks;  // 0/1 per selected item
};

/// Top-k of `scores + N(0, sigma_s^2) + boost`; each shown item clicks with
/// probability equal to its clean score clamped to [0, 1].
RankStepResult rank_step(const Vector& scores, const std::vector<int>& item_group, const BoostMod& boost, int k,
                         double sigma_s, Rng& rng);

/// w = sum_i p_i n_i / sum_i n_i over item groups i.
double retention_weight(const std::vector<int>& group_counts, const std::vector<double>& preferences);

struct Retention {
  double return_probability = 0.0;
  int return_day = 1;
  double reward = 0.0;
};

/// p_r = max(w, floor); return day ~ Geometric(p_r); reward 1/day.
Retention retention_reward(const std::vector<int>& group_counts, const std::vector<double>& preferences, Rng& rng,
                           double floor = 1e-3);

/// E[1/d] for d ~ Geometric(p).
double expected_inverse_return_day(double p);

class RankEnv final : public MultiScaleEnv {
 public:
  explicit RankEnv(RankEnvSpec spec = {});

  std::string name() const override { return "ranking"; }
  std::vector<LevelSpec> levels() const override;
  bool level_learned(int level) const override { return level != 1; }
  int group_count(int) const override { return spec_.groups; }
  ContextSample sample_context(int level, Rng& rng, std::optional<int> group = std::nullopt) const override;
  StepOutcome step(int level, const ContextSample& x, int action, std::span<const int> upper,
                   LowerController& lower, Rng& rng) const override;
  void dump_ground_truth(std::ostream& out) const override;

  const RankEnvSpec& spec() const { return spec_; }
  const Vector& base_scores(int user_group) const { return scores_.at(static_cast<std::size_t>(user_group)); }
  const std::vector<int>& item_groups() const { return item_group_; }
  std::vector<double> preferences(int user_group) const;
  std::vector<MacroAction> boost_actions() const;

 private:
  RankEnvSpec spec_;
  std::vector<Vector> scores_;
  std::vector<int> item_group_;
};

}  // namespace msbl

#endif  // MSBL_ENVIRONMENTS_RANKING_HPP_
