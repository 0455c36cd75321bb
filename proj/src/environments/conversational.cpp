#include "msbl/environments/conversational.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_set>

namespace msbl {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(p[static_cast<std::size_t>(i)], p[rng.below(static_cast<std::uint64_t>(i + 1))]);
  return p;
}

}  // namespace

void ConvEnvSpec::validate() const {
  if (context_dim < 1 || groups < 2) throw Error("conversational: need context_dim >= 1 and groups >= 2");
  if (micro_actions < 2 || micro_horizon < 1 || l2_horizon < 1) throw Error("conversational: bad sizes");
  if (temperatures.empty()) throw Error("conversational: empty temperature set");
  for (double t : temperatures)
    if (!(t >= 0.0)) throw Error("conversational: temperatures must be >= 0");
  if (l3_weights.empty()) throw Error("conversational: empty weight set");
  for (const auto& w : l3_weights)
    if (w.size() != 2) throw Error("conversational: weight vectors have two entries");
  if (static_cast<int>(beta_u.size()) != groups || static_cast<int>(gamma_u.size()) != groups)
    throw Error("conversational: one beta_u and gamma_u per group");
  for (double b : beta_u)
    if (b < 0.0 || b > 1.0) throw Error("conversational: beta_u outside [0, 1]");
  for (double g : gamma_u)
    if (g < 0.0 || g > 1.0) throw Error("conversational: gamma_u outside [0, 1]");
  if (static_cast<int>(optimal_action.size()) != groups) throw Error("conversational: one optimal action per group");
  for (int a : optimal_action)
    if (a < 0 || a >= micro_actions) throw Error("conversational: optimal action out of range");
  if (!(sigma_f >= 0.0)) throw Error("conversational: sigma_f must be >= 0");
  if (train_users < 1 || test_users < 1) throw Error("conversational: user counts must be positive");
  if (vocabulary < 3 || response_length < 1) throw Error("conversational: bad vocabulary or response length");
  if (!(chain_probability > 1.0 / vocabulary && chain_probability < 1.0))
    throw Error("conversational: chain_probability must lie in (1/vocabulary, 1)");
}

ConvTokenModel::ConvTokenModel(int vocabulary, int agents, int length, double chain_probability, Rng construction)
    : vocabulary_(vocabulary), length_(length) {
  chain_logit_ = std::log((vocabulary - 1) * chain_probability / (1.0 - chain_probability));
  for (int a = 0; a < agents; ++a) {
    Rng r = construction.substream(static_cast<std::uint64_t>(a));
    const std::vector<int> cycle = random_permutation(vocabulary, r);
    std::vector<int> next(static_cast<std::size_t>(vocabulary));
    for (int i = 0; i < vocabulary; ++i)
      next[static_cast<std::size_t>(cycle[static_cast<std::size_t>(i)])] =
          cycle[static_cast<std::size_t>((i + 1) % vocabulary)];
    successor_.push_back(std::move(next));
  }
}

int ConvTokenModel::successor(int agent, int prev) const {
  return successor_.at(static_cast<std::size_t>(agent)).at(static_cast<std::size_t>(prev));
}

double ConvTokenModel::log_prob(int agent, int prev, int token) const {
  const double norm = std::log(std::exp(chain_logit_) + (vocabulary_ - 1));
  return (successor(agent, prev) == token ? chain_logit_ : 0.0) - norm;
}

std::vector<int> ConvTokenModel::generate(int agent, double tau, int prev, Rng& rng) const {
  if (!(tau >= 0.0)) throw Error("generate: temperature must be >= 0");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(length_));
  const double hot = tau == 0.0 ? 0.0 : std::exp(chain_logit_ / std::max(tau, kMinTemperature));
  for (int i = 0; i < length_; ++i) {
    const int chain = successor(agent, prev);
    int token = chain;
    if (tau > 0.0) {
      // Chain token with weight `hot`, every other token with weight 1.
      const double u = rng.uniform() * (hot + (vocabulary_ - 1));
      if (u >= hot) {
        int other = std::min(static_cast<int>(u - hot), vocabulary_ - 2);
        token = other >= chain ? other + 1 : other;
      }
    }
    out.push_back(token);
    prev = token;
  }
  return out;
}

std::vector<int> conv_generate(const ConvTokenModel& model, int agent_action, double tau,
                               const std::vector<int>& prev_tokens, Rng& rng) {
  return model.generate(agent_action, tau, prev_tokens.empty() ? 0 : prev_tokens.back(), rng);
}

double conv_micro_reward(const ConvTokenModel& model, const std::vector<int>& tokens, int optimal_action,
                         int prev_token) {
  if (tokens.empty()) throw Error("micro reward: empty response");
  double s = 0.0;
  int prev = prev_token;
  for (int t : tokens) {
    s += model.log_prob(optimal_action, prev, t);
    prev = t;
  }
  return std::exp(s / static_cast<double>(tokens.size()));
}

double diversity_score(const std::vector<std::vector<int>>& responses) {
  if (responses.empty()) throw Error("diversity: no responses");
  std::unordered_set<std::uint64_t> seen;
  std::size_t total = 0, repeated = 0;
  for (const auto& r : responses) {
    for (std::size_t i = 0; i + 2 < r.size(); ++i) {
      const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r[i])) << 42) ^
                                (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r[i + 1])) << 21) ^
                                static_cast<std::uint64_t>(static_cast<std::uint32_t>(r[i + 2]));
      ++total;
      if (!seen.insert(key).second) ++repeated;
    }
  }
  if (total == 0) return 1.0;
  return 1.0 - static_cast<double>(repeated) / static_cast<double>(total);
}

double conv_level2_reward(double mean_r1, double diversity, double beta_u, double scale, double shift) {
  return logistic(scale * (beta_u * mean_r1 + (1.0 - beta_u) * diversity - shift));
}

double conv_parameterized_feedback(double r2, const Vector& weights, double threshold) {
  if (weights.size() != 2) throw Error("feedback: weight vector must have two entries");
  return weights(0) * r2 + weights(1) * std::min(threshold, r2);
}

double conv_level3_reward(double r2_first, double r2_second, double gamma_u, bool active) {
  return gamma_u * 0.5 * (r2_first + r2_second) + (1.0 - gamma_u) * (active ? 1.0 : 0.0);
}

bool conv_activity_indicator(const std::vector<double>& r2, double threshold) {
  if (r2.empty()) throw Error("activity: no level-2 rewards");
  return std::accumulate(r2.begin(), r2.end(), 0.0) / static_cast<double>(r2.size()) <= threshold;
}

ConvEnv::ConvEnv(ConvEnvSpec spec)
    : spec_((spec.validate(), std::move(spec))),
      model_(spec_.vocabulary, spec_.micro_actions, spec_.response_length, spec_.chain_probability,
             Rng(spec_.construction_seed).substream("token-model")) {
  for (int level = 1; level <= 3; ++level) {
    std::vector<Vector> m;
    for (int g = 0; g < spec_.groups; ++g) {
      Vector mu(spec_.context_dim);
      // Groups alternate sign patterns; each level uses a different pattern.
      for (int i = 0; i < spec_.context_dim; ++i) {
        const bool odd = ((i + level) % 2) != 0;
        mu(i) = (g % 2 == 0 ? 1.0 : -1.0) * (odd ? 1.0 : -1.0) * (1.0 + g / 2);
      }
      m.push_back(mu);
    }
    means_.push_back(std::move(m));
  }
  Rng probe(0);
  std::vector<std::vector<int>> greedy;
  for (int a = 0; a < spec_.micro_actions; ++a) greedy.push_back(model_.generate(a, 0.0, 0, probe));
  for (int a = 0; a < spec_.micro_actions; ++a)
    for (int b = a + 1; b < spec_.micro_actions; ++b)
      if (greedy[static_cast<std::size_t>(a)] == greedy[static_cast<std::size_t>(b)])
        throw Error("conversational: token models are not distinct");
}

std::vector<LevelSpec> ConvEnv::levels() const {
  return {{1, 1, spec_.micro_actions, spec_.context_dim},
          {2, spec_.micro_horizon, static_cast<int>(spec_.temperatures.size()), spec_.context_dim},
          {3, spec_.l2_horizon, static_cast<int>(spec_.l3_weights.size()), spec_.context_dim}};
}

const Vector& ConvEnv::group_mean(int level, int group) const {
  return means_.at(static_cast<std::size_t>(level - 1)).at(static_cast<std::size_t>(group));
}

std::vector<MacroAction> ConvEnv::temperature_actions() const {
  std::vector<MacroAction> out;
  for (std::size_t i = 0; i < spec_.temperatures.size(); ++i)
    out.push_back(MacroAction::temperature(spec_.temperatures[i], static_cast<int>(i)));
  return out;
}

std::vector<MacroAction> ConvEnv::weight_actions() const {
  std::vector<MacroAction> out;
  for (std::size_t i = 0; i < spec_.l3_weights.size(); ++i) {
    const auto& w = spec_.l3_weights[i];
    out.push_back(MacroAction::feedback(Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size())),
                                        static_cast<int>(i)));
  }
  return out;
}

double ConvEnv::decoding_temperature(std::span<const int> upper) const {
  if (upper.empty()) return 0.0;
  return spec_.temperatures.at(static_cast<std::size_t>(upper[0]));
}

ContextSample ConvEnv::sample_context(int level, Rng& rng, std::optional<int> group) const {
  if (level < 1 || level > 3) throw Error("conversational: no level " + std::to_string(level));
  const int g = group ? *group : static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.groups)));
  if (g < 0 || g >= spec_.groups) throw Error("conversational: group out of range");
  ContextSample x;
  x.level_index = level;
  x.group_id = g;
  x.features = group_mean(level, g);
  for (int i = 0; i < spec_.context_dim; ++i) x.features(i) += spec_.sigma_f * rng.normal();
  return x;
}

StepOutcome ConvEnv::step_micro(const ContextSample& x, int agent, double tau, int prev, Rng& rng,
                                std::vector<int>* tokens) const {
  if (!x.group_id) throw Error("conversational: context without ground truth");
  if (agent < 0 || agent >= spec_.micro_actions) throw Error("conversational: agent out of range");
  std::vector<int> y = model_.generate(agent, tau, prev, rng);
  StepOutcome out;
  out.reward = conv_micro_reward(model_, y, spec_.optimal_action[static_cast<std::size_t>(*x.group_id)], prev);
  out.level_means = {out.reward};
  if (tokens) *tokens = std::move(y);
  return out;
}

StepOutcome ConvEnv::step_conversation(const ContextSample& x, int temperature_index, std::span<const int> upper,
                                       LowerController& lower, Rng& rng) const {
  if (!x.group_id) throw Error("conversational: context without ground truth");
  if (temperature_index < 0 || temperature_index >= static_cast<int>(spec_.temperatures.size()))
    throw Error("conversational: temperature index out of range");
  const std::vector<int> up = push_upper(temperature_index, upper);
  const double tau = spec_.temperatures[static_cast<std::size_t>(temperature_index)];
  std::vector<std::vector<int>> responses;
  double r1 = 0.0;
  int prev = 0;
  for (int t = 0; t < spec_.micro_horizon; ++t) {
    const ContextSample x1 = sample_context(1, rng);
    const int agent = lower.act(1, x1, up, rng).first;
    std::vector<int> y;
    r1 += step_micro(x1, agent, tau, prev, rng, &y).reward;
    prev = y.back();
    responses.push_back(std::move(y));
  }
  r1 /= spec_.micro_horizon;
  StepOutcome out;
  out.reward = conv_level2_reward(r1, diversity_score(responses), spec_.beta_u[static_cast<std::size_t>(*x.group_id)],
                                  spec_.sigmoid_scale, spec_.sigmoid_shift);
  out.components = Vector(2);
  out.components << out.reward, std::min(spec_.threshold, out.reward);
  out.level_means = {r1, out.reward};
  return out;
}

StepOutcome ConvEnv::step(int level, const ContextSample& x, int action, std::span<const int> upper,
                          LowerController& lower, Rng& rng) const {
  if (level == 1) return step_micro(x, action, decoding_temperature(upper), 0, rng, nullptr);
  if (level == 2) return step_conversation(x, action, upper, lower, rng);
  if (level != 3) throw Error("conversational: no level " + std::to_string(level));
  if (!x.group_id) throw Error("conversational: context without ground truth");
  if (action < 0 || action >= static_cast<int>(spec_.l3_weights.size()))
    throw Error("conversational: weight index out of range");
  const std::vector<int> up = push_upper(action, upper);
  // The user's level-2 group is fixed across their conversations.
  const int g2 = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.groups)));
  std::vector<double> r2;
  double r1 = 0.0;
  for (int j = 0; j < spec_.l2_horizon; ++j) {
    const ContextSample x2 = sample_context(2, rng, g2);
    const int a2 = lower.act(2, x2, up, rng).first;
    const StepOutcome o = step_conversation(x2, a2, up, lower, rng);
    r1 += o.level_means[0];
    r2.push_back(o.reward);
  }
  const double gamma = spec_.gamma_u[static_cast<std::size_t>(*x.group_id)];
  const bool active = conv_activity_indicator(r2, spec_.threshold);
  StepOutcome out;
  const double mean_r2 = std::accumulate(r2.begin(), r2.end(), 0.0) / static_cast<double>(r2.size());
  out.reward = gamma * mean_r2 + (1.0 - gamma) * (active ? 1.0 : 0.0);
  out.level_means = {r1 / spec_.l2_horizon, mean_r2, out.reward};
  return out;
}

void ConvEnv::dump_ground_truth(std::ostream& out) const {
  out << "# group means\nlevel,group";
  for (int i = 0; i < spec_.context_dim; ++i) out << ",mu" << i;
  out << '\n';
  for (int level = 1; level <= 3; ++level)
    for (int g = 0; g < spec_.groups; ++g) {
      out << level << ',' << g;
      for (int i = 0; i < spec_.context_dim; ++i) out << ',' << format_real(group_mean(level, g)(i));
      out << '\n';
    }
  out << "# groups\ngroup,optimal_action,beta_u,gamma_u\n";
  for (int g = 0; g < spec_.groups; ++g)
    out << g << ',' << spec_.optimal_action[static_cast<std::size_t>(g)] << ','
        << format_real(spec_.beta_u[static_cast<std::size_t>(g)]) << ','
        << format_real(spec_.gamma_u[static_cast<std::size_t>(g)]) << '\n';
  out << "# token model: chain_logit=" << format_real(model_.chain_logit()) << "\nagent,prev,successor\n";
  for (int a = 0; a < model_.agents(); ++a)
    for (int v = 0; v < model_.vocabulary(); ++v) out << a << ',' << v << ',' << model_.successor(a, v) << '\n';
}

}  // namespace msbl
