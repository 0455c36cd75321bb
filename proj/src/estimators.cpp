#include "msbl/estimators.hpp"

#include <cmath>
#include <numeric>

namespace msbl {
namespace {

void check_dataset(const StochasticPolicy& policy, const LoggedDataset& data) {
  if (data.empty()) throw Error("estimator: empty dataset");
  if (policy.action_count() != data.action_count)
    throw Error("estimator: policy has " + std::to_string(policy.action_count()) + " actions, dataset " +
                std::to_string(data.action_count));
}

double checked_propensity(const LoggedInteraction& it) {
  if (!(it.propensity >= kPropensityFloor)) throw Error("estimator: propensity below floor");
  return it.propensity;
}

double ratio(const StochasticPolicy& policy, const LoggedInteraction& it) {
  const Vector probs = policy.action_distribution(it.context.features);
  return probs(it.action_index) / checked_propensity(it);
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  if (xs.size() == 1) return xs[0];
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

Vector pairwise_sum(std::span<const Vector> xs) {
  if (xs.empty()) throw Error("pairwise_sum: empty input");
  if (xs.size() == 1) return xs[0];
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

ValueEstimate summarize_terms(std::span<const double> terms, std::string id) {
  ValueEstimate est;
  est.n = terms.size();
  est.estimator_id = std::move(id);
  if (terms.empty()) return est;
  const double n = static_cast<double>(terms.size());
  est.value = pairwise_sum(terms) / n;
  if (terms.size() > 1) {
    std::vector<double> sq(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) sq[i] = (terms[i] - est.value) * (terms[i] - est.value);
    est.standard_error = std::sqrt(pairwise_sum(sq) / (n - 1.0)) / std::sqrt(n);
  }
  return est;
}

ValueEstimate ips_value(const StochasticPolicy& policy, const LoggedDataset& data) {
  check_dataset(policy, data);
  std::vector<double> terms(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& it = data.interactions[i];
    terms[i] = ratio(policy, it) * it.reward;
  }
  return summarize_terms(terms, "ips");
}

ValueEstimate clipped_ips_value(const StochasticPolicy& policy, const LoggedDataset& data, double clip) {
  if (!(clip > 0.0)) throw Error("clip level must be > 0");
  check_dataset(policy, data);
  std::vector<double> terms(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& it = data.interactions[i];
    terms[i] = std::min(ratio(policy, it), clip) * it.reward;
  }
  auto est = summarize_terms(terms, "clipped-ips");
  est.clip_level = clip;
  return est;
}

Vector ips_gradient(const SoftmaxPolicy& policy, const LoggedDataset& data, std::span<const std::size_t> rows) {
  check_dataset(policy, data);
  if (rows.empty()) throw Error("ips_gradient: no rows");
  std::vector<Vector> terms;
  terms.reserve(rows.size());
  for (std::size_t row : rows) {
    const auto& it = data.interactions.at(row);
    const double w = ratio(policy, it) * it.reward;
    if (w == 0.0)
      terms.push_back(Vector::Zero(policy.parameters().size()));
    else
      terms.push_back(w * policy.log_prob_gradient(it.context.features, it.action_index));
  }
  return pairwise_sum(terms) / static_cast<double>(rows.size());
}

Vector ips_gradient(const SoftmaxPolicy& policy, const LoggedDataset& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return ips_gradient(policy, data, rows);
}

std::unique_ptr<OffPolicyEstimator> make_estimator(const std::string& name) {
  if (name == "ips") return std::make_unique<IpsEstimator>();
  if (name == "clipped-ips") return std::make_unique<ClippedIpsEstimator>();
  if (name.rfind("clipped-ips:", 0) == 0) return std::make_unique<ClippedIpsEstimator>(parse_real(name.substr(12)));
  if (name == "dm" || name == "dr") throw Error("estimator '" + name + "' has no implementation");
  throw Error("unknown estimator '" + name + "'");
}

GroundTruthValue monte_carlo_value(const StochasticPolicy& policy, const BanditEnv& env, std::size_t samples,
                                   Rng& rng) {
  if (samples == 0) throw Error("monte carlo budget must be > 0");
  std::vector<double> rewards(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const ContextSample x = env.sample_context(rng);
    const auto [a, p] = sample_from(policy, x.features, rng);
    rewards[i] = env.sample_reward(x, a, rng);
  }
  const auto est = summarize_terms(rewards, "mc");
  return {est.value, est.standard_error, false};
}

GroundTruthValue brute_force_value(const StochasticPolicy& policy, const BanditEnv& env,
                                   std::optional<std::size_t> mc_budget, Rng* rng) {
  if (env.enumerable()) {
    double v = 0.0;
    for (int c = 0; c < env.context_count(); ++c) {
      const Vector probs = policy.action_distribution(env.context(c).features);
      double vc = 0.0;
      for (int a = 0; a < env.action_count(); ++a) vc += probs(a) * env.mean_reward(c, a);
      v += env.context_probability(c) * vc;
    }
    return {v, 0.0, true};
  }
  if (!mc_budget || rng == nullptr) throw Error("environment is not enumerable and no Monte Carlo budget was given");
  return monte_carlo_value(policy, env, *mc_budget, *rng);
}

}  // namespace msbl
