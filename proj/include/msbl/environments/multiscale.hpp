#ifndef MSBL_ENVIRONMENTS_MULTISCALE_HPP_
#define MSBL_ENVIRONMENTS_MULTISCALE_HPP_

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msbl/core.hpp"
#include "msbl/rng.hpp"

namespace msbl {

/// Result of executing one level-k action.
struct StepOutcome {
  double reward = 0.0;
  /// Vector feedback at this level; empty when the level has none.
  Vector components;
  /// Entry j-1 is the mean level-j reward observed inside this step
  /// (the last entry is `reward` itself).
  std::vector<double> level_means;
};

/// Chooses lower-level actions while an upper-level step executes.
/// `upper` holds the actions already chosen above `level`, nearest first.
class LowerController {
 public:
  virtual ~LowerController() = default;
  virtual std::pair<int, double> act(int level, const ContextSample& x, std::span<const int> upper, Rng& rng) = 0;
};

/// Leveled reward simulator. Level 1 is the fastest timescale.
class MultiScaleEnv {
 public:
  virtual ~MultiScaleEnv() = default;
  virtual std::string name() const = 0;
  virtual std::vector<LevelSpec> levels() const = 0;
  int level_count() const { return static_cast<int>(levels().size()); }
  LevelSpec level(int k) const { return levels().at(static_cast<std::size_t>(k - 1)); }

  /// False when the environment executes this level with a built-in policy
  /// (score-argmax micro policies); the controller is then never consulted.
  virtual bool level_learned(int /*level*/) const { return true; }
  /// Dimension of the vector feedback at `level`, 0 when scalar only.
  virtual int reward_component_count(int /*level*/) const { return 0; }

  virtual int group_count(int level) const = 0;
  /// Marginal context at `level`, optionally restricted to one ground-truth group.
  virtual ContextSample sample_context(int level, Rng& rng, std::optional<int> group = std::nullopt) const = 0;

  virtual StepOutcome step(int level, const ContextSample& x, int action, std::span<const int> upper,
                           LowerController& lower, Rng& rng) const = 0;

  /// Writes the simulator's ground-truth tables for audit.
  virtual void dump_ground_truth(std::ostream& out) const = 0;
};

/// Controller that refuses to act; for environments whose lower levels are built in.
class NoController final : public LowerController {
 public:
  std::pair<int, double> act(int level, const ContextSample&, std::span<const int>, Rng&) override {
    throw Error("no controller for level " + std::to_string(level));
  }
};

/// upper with `a` prepended.
std::vector<int> push_upper(int a, std::span<const int> upper);

}  // namespace msbl

#endif  // MSBL_ENVIRONMENTS_MULTISCALE_HPP_
