#ifndef MSBL_ENVIRONMENTS_BANDIT_HPP_
#define MSBL_ENVIRONMENTS_BANDIT_HPP_

#include <vector>

#include "msbl/estimators.hpp"

namespace msbl {

/// Finite contextual bandit with one-hot contexts and Bernoulli rewards of
/// known mean. Ground truth for estimator and training tests.
class FiniteBandit final : public BanditEnv {
 public:
  /// means(c, a) in [0, 1]; contexts drawn with `context_probs`
  /// (uniform when empty).
  explicit FiniteBandit(Matrix means, std::vector<double> context_probs = {});

  int action_count() const override { return static_cast<int>(means_.cols()); }
  int context_dim() const override { return static_cast<int>(means_.rows()); }
  ContextSample sample_context(Rng& rng) const override;
  double sample_reward(const ContextSample& x, int action, Rng& rng) const override;

  bool enumerable() const override { return true; }
  int context_count() const override { return static_cast<int>(means_.rows()); }
  ContextSample context(int c) const override;
  double context_probability(int c) const override { return probs_.at(static_cast<std::size_t>(c)); }
  double mean_reward(int c, int a) const override { return means_(c, a); }

 private:
  Matrix means_;
  std::vector<double> probs_;
};

/// Logs n interactions from `logger` on `env`.
LoggedDataset collect_bandit_data(const BanditEnv& env, const StochasticPolicy& logger, std::size_t n, Rng& rng);

}  // namespace msbl

#endif  // MSBL_ENVIRONMENTS_BANDIT_HPP_
