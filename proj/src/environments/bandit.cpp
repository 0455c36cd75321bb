#include "msbl/environments/bandit.hpp"

#include "msbl/environments/multiscale.hpp"

namespace msbl {

std::vector<int> push_upper(int a, std::span<const int> upper) {
  std::vector<int> out;
  out.reserve(upper.size() + 1);
  out.push_back(a);
  out.insert(out.end(), upper.begin(), upper.end());
  return out;
}

FiniteBandit::FiniteBandit(Matrix means, std::vector<double> context_probs)
    : means_(std::move(means)), probs_(std::move(context_probs)) {
  if (means_.rows() < 1 || means_.cols() < 1) throw Error("bandit: empty mean table");
  if ((means_.array() < 0.0).any() || (means_.array() > 1.0).any()) throw Error("bandit: means must lie in [0, 1]");
  if (probs_.empty()) probs_.assign(static_cast<std::size_t>(means_.rows()), 1.0 / static_cast<double>(means_.rows()));
  if (probs_.size() != static_cast<std::size_t>(means_.rows())) throw Error("bandit: context probability count");
}

ContextSample FiniteBandit::context(int c) const {
  ContextSample x;
  x.level_index = 1;
  x.features = Vector::Zero(means_.rows());
  x.features(c) = 1.0;
  x.group_id = c;
  return x;
}

ContextSample FiniteBandit::sample_context(Rng& rng) const {
  return context(static_cast<int>(rng.categorical(probs_)));
}

double FiniteBandit::sample_reward(const ContextSample& x, int action, Rng& rng) const {
  if (!x.group_id) throw Error("bandit: context without ground-truth id");
  return rng.bernoulli(means_(*x.group_id, action)) ? 1.0 : 0.0;
}

LoggedDataset collect_bandit_data(const BanditEnv& env, const StochasticPolicy& logger, std::size_t n, Rng& rng) {
  LoggedDataset data;
  data.level_index = 1;
  data.context_dim = env.context_dim();
  data.action_count = env.action_count();
  data.logging_policy_id = logger.id();
  data.interactions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    LoggedInteraction it;
    it.context = env.sample_context(rng);
    const auto [a, p] = sample_from(logger, it.context.features, rng);
    it.action_index = a;
    it.propensity = p;
    it.reward = env.sample_reward(it.context, a, rng);
    it.context.group_id.reset();
    data.interactions.push_back(std::move(it));
  }
  return data;
}

}  // namespace msbl
