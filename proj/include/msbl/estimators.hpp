#ifndef MSBL_ESTIMATORS_HPP_
#define MSBL_ESTIMATORS_HPP_

#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "msbl/core.hpp"
#include "msbl/policies.hpp"
#include "msbl/rng.hpp"

namespace msbl {

inline constexpr double kDefaultClip = 100.0;
inline constexpr double kNoClip = std::numeric_limits<double>::infinity();

struct ValueEstimate {
  double value = 0.0;
  /// Sample standard deviation of the per-example terms over sqrt(n).
  double standard_error = 0.0;
  std::size_t n = 0;
  std::string estimator_id;
  std::optional<double> clip_level;
};

/// Sum in a fixed pairwise tree, so results do not depend on how the terms
/// were produced.
double pairwise_sum(std::span<const double> xs);
Vector pairwise_sum(std::span<const Vector> xs);

/// Mean and standard error of `terms`.
ValueEstimate summarize_terms(std::span<const double> terms, std::string id);

/// (1/n) sum_i pi(a_i|x_i) / p_i * r_i.
ValueEstimate ips_value(const StochasticPolicy& policy, const LoggedDataset& data);
/// Per-example weight min(pi/p, clip). `clip` must be > 0; kNoClip disables.
ValueEstimate clipped_ips_value(const StochasticPolicy& policy, const LoggedDataset& data, double clip = kDefaultClip);
/// Gradient of the IPS value in the policy parameters via the score identity.
Vector ips_gradient(const SoftmaxPolicy& policy, const LoggedDataset& data);
/// Same, over a subset of rows.
Vector ips_gradient(const SoftmaxPolicy& policy, const LoggedDataset& data, std::span<const std::size_t> rows);

/// Pluggable off-policy estimator. IPS and clipped IPS are provided; the
/// direct method and doubly robust estimator slot in behind this interface.
class OffPolicyEstimator {
 public:
  virtual ~OffPolicyEstimator() = default;
  virtual ValueEstimate estimate(const StochasticPolicy& policy, const LoggedDataset& data) const = 0;
  virtual std::string id() const = 0;
};

class IpsEstimator final : public OffPolicyEstimator {
 public:
  ValueEstimate estimate(const StochasticPolicy& policy, const LoggedDataset& data) const override {
    return ips_value(policy, data);
  }
  std::string id() const override { return "ips"; }
};

class ClippedIpsEstimator final : public OffPolicyEstimator {
 public:
  explicit ClippedIpsEstimator(double clip = kDefaultClip) : clip_(clip) {}
  ValueEstimate estimate(const StochasticPolicy& policy, const LoggedDataset& data) const override {
    return clipped_ips_value(policy, data, clip_);
  }
  std::string id() const override { return "clipped-ips"; }

 private:
  double clip_;
};

/// "ips" or "clipped-ips[:M]". "dm" and "dr" are recognised but have no
/// implementation and throw.
std::unique_ptr<OffPolicyEstimator> make_estimator(const std::string& name);

/// Single-level contextual bandit simulator, used as ground truth.
class BanditEnv {
 public:
  virtual ~BanditEnv() = default;
  virtual int action_count() const = 0;
  virtual int context_dim() const = 0;
  virtual ContextSample sample_context(Rng& rng) const = 0;
  virtual double sample_reward(const ContextSample& x, int action, Rng& rng) const = 0;

  /// Finite context support with queryable reward means; defaults to none.
  virtual bool enumerable() const { return false; }
  virtual int context_count() const { return 0; }
  virtual ContextSample context(int) const { throw Error("environment is not enumerable"); }
  virtual double context_probability(int) const { throw Error("environment is not enumerable"); }
  virtual double mean_reward(int /*context*/, int /*action*/) const { throw Error("environment is not enumerable"); }
};

struct GroundTruthValue {
  double value = 0.0;
  /// Zero for exact enumeration.
  double standard_error = 0.0;
  bool exact = true;
};

/// Expected reward of `policy` on `env`: exact when the environment is
/// enumerable, otherwise Monte Carlo with `mc_budget` samples (required).
GroundTruthValue brute_force_value(const StochasticPolicy& policy, const BanditEnv& env,
                                   std::optional<std::size_t> mc_budget = std::nullopt, Rng* rng = nullptr);

/// Monte Carlo estimate regardless of enumerability.
GroundTruthValue monte_carlo_value(const StochasticPolicy& policy, const BanditEnv& env, std::size_t samples, Rng& rng);

}  // namespace msbl

#endif  // MSBL_ESTIMATORS_HPP_
