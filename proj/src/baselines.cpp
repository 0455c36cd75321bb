#include "msbl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msbl {

UniformPolicy uniform_policy(int action_count) { return UniformPolicy(action_count); }

FixedActionPolicy fixed_macro_policy(int action_count, int j) {
  if (j < 0 || j >= action_count) throw Error("fixed macro policy: action " + std::to_string(j) + " out of range");
  return FixedActionPolicy(action_count, j);
}

Skyline oracle_skyline(const MultiScaleEnv& env, int level, LowerController& lower, std::size_t episodes,
                       const Rng& rng) {
  if (level < 1 || level > env.level_count()) throw Error("skyline: no level " + std::to_string(level));
  if (episodes == 0) throw Error("skyline: need at least one episode per action");
  const int groups = env.group_count(level);
  const int actions = env.level(level).action_count;
  if (groups < 1) throw Error("skyline: level has no enumerable groups");
  Skyline out;
  double se_sq = 0.0;
  for (int g = 0; g < groups; ++g) {
    SkylineEntry best{g, -1, -std::numeric_limits<double>::infinity(), 0.0};
    std::vector<double> row;
    for (int a = 0; a < actions; ++a) {
      const Rng base = rng.substream(static_cast<std::uint64_t>(g)).substream(static_cast<std::uint64_t>(a));
      std::vector<double> terms;
      terms.reserve(episodes);
      for (std::size_t e = 0; e < episodes; ++e) {
        Rng r = base.substream(static_cast<std::uint64_t>(e));
        const ContextSample x = env.sample_context(level, r, g);
        terms.push_back(env.step(level, x, a, {}, lower, r).reward);
      }
      const ValueEstimate v = summarize_terms(terms, "skyline");
      row.push_back(v.value);
      if (v.value > best.value) best = {g, a, v.value, v.standard_error};
    }
    out.values.push_back(std::move(row));
    out.value += best.value / groups;
    se_sq += best.standard_error * best.standard_error;
    out.groups.push_back(best);
  }
  out.standard_error = std::sqrt(se_sq) / groups;
  return out;
}

QTable::QTable(int contexts, int horizon, int actions)
    : contexts_(contexts), horizon_(horizon), actions_(actions),
      q_(static_cast<std::size_t>(contexts) * static_cast<std::size_t>(horizon) * static_cast<std::size_t>(actions),
         0.0) {
  if (contexts < 1 || horizon < 1 || actions < 1) throw Error("Q table: sizes must be positive");
}

double& QTable::at(int context, int t, int action) {
  return q_.at((static_cast<std::size_t>(context) * static_cast<std::size_t>(horizon_) + static_cast<std::size_t>(t)) *
                   static_cast<std::size_t>(actions_) +
               static_cast<std::size_t>(action));
}

double QTable::at(int context, int t, int action) const { return const_cast<QTable*>(this)->at(context, t, action); }

int QTable::greedy(int context, int t) const {
  int best = 0;
  for (int a = 1; a < actions_; ++a)
    if (at(context, t, a) > at(context, t, best)) best = a;
  return best;
}

double greedy_value(const ToyEnv& env, const QTable& q) {
  const int contexts = env.spec().context_count;
  const int horizon = env.spec().horizon;
  double v = 0.0;
  for (int c = 0; c < contexts; ++c) {
    int hits = 0;
    for (int t = 0; t < horizon; ++t) hits += env.contains_preferred(c, q.greedy(c, t)) ? 1 : 0;
    v += static_cast<double>(hits) / horizon;
  }
  return v / contexts;
}

QLearningResult q_learning(const ToyEnv& env, const QLearningConfig& config, Rng& rng) {
  if (config.episodes < 0 || config.eval_every < 1) throw Error("q_learning: bad episode settings");
  if (!(config.alpha > 0.0 && config.alpha <= 1.0)) throw Error("q_learning: alpha must lie in (0, 1]");
  const int contexts = env.spec().context_count;
  const int horizon = env.spec().horizon;
  const int actions = env.micro_action_count();
  QLearningResult out{QTable(contexts, horizon, actions), {}, std::nullopt};
  QTable& q = out.table;
  const long decay = config.decay_episodes > 0 ? config.decay_episodes : std::max(config.episodes, 1L);
  std::vector<int> chosen(static_cast<std::size_t>(horizon));
  for (long ep = 0; ep < config.episodes; ++ep) {
    const double frac = std::min(1.0, static_cast<double>(ep) / static_cast<double>(decay));
    const double eps = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
    const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(contexts)));
    int hits = 0;
    for (int t = 0; t < horizon; ++t) {
      const int a = rng.uniform() < eps ? static_cast<int>(rng.below(static_cast<std::uint64_t>(actions)))
                                        : q.greedy(c, t);
      chosen[static_cast<std::size_t>(t)] = a;
      hits += env.contains_preferred(c, a) ? 1 : 0;
    }
    const double reward = static_cast<double>(hits) / horizon;
    for (int t = 0; t < horizon; ++t) {
      const int a = chosen[static_cast<std::size_t>(t)];
      const double target = t + 1 == horizon ? reward : config.gamma * q.at(c, t + 1, q.greedy(c, t + 1));
      q.at(c, t, a) += config.alpha * (target - q.at(c, t, a));
    }
    if ((ep + 1) % config.eval_every == 0) {
      const double v = greedy_value(env, q);
      out.curve.push_back({ep + 1, v});
      if (config.stop_at && v >= *config.stop_at) {
        out.reached_at = ep + 1;
        break;
      }
    }
  }
  return out;
}

SoftmaxPolicy train_toy_macro(const ToyEnv& env, const LevelConfig& macro_level, std::size_t samples,
                              const Rng& seed) {
  LevelConfig micro;
  micro.mode = FamilyMode::PolicyModification;
  micro.macro_actions = env.macro_actions();
  LevelConfig macro = macro_level;
  macro.samples = samples;
  const LevelStack stack(env.levels(), {micro, macro});
  const LearningResult r = policy_learning_two_level(env, stack, seed);
  return *std::dynamic_pointer_cast<const SoftmaxPolicy>(r.policy.policies[1]);
}

std::optional<double> censored_median(std::vector<std::optional<double>> values) {
  if (values.empty()) return std::nullopt;
  std::vector<double> v;
  for (const auto& x : values) v.push_back(x ? *x : std::numeric_limits<double>::infinity());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double m = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (!std::isfinite(m)) return std::nullopt;
  return m;
}

EfficiencyResult sample_efficiency_ratio(const ToyEnv& env, const EfficiencyConfig& config, const Rng& rng) {
  if (config.seeds.empty()) throw Error("sample efficiency: no seeds");
  EfficiencyResult out;
  std::vector<QLearningResult> runs;
  double final_sum = 0.0;
  for (std::uint64_t s : config.seeds) {
    Rng r = rng.substream("q-learning").substream(s);
    QLearningConfig qc = config.q;
    qc.episodes = config.asymptote_episodes;
    qc.stop_at.reset();
    runs.push_back(q_learning(env, qc, r));
    final_sum += runs.back().curve.empty() ? 0.0 : runs.back().curve.back().value;
  }
  out.target = config.target.value_or(final_sum / static_cast<double>(config.seeds.size()));
  for (const auto& run : runs) {
    out.q_curves.push_back(run.curve);
    out.q_tables.push_back(run.table);
  }
  const double goal = config.target ? *config.target : out.target - config.reach_tolerance;

  std::vector<std::optional<double>> q_counts, m_counts;
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    std::optional<long> reached;
    for (const auto& p : runs[i].curve)
      if (p.value >= goal) {
        reached = p.episode;
        break;
      }
    out.q_episodes.push_back(reached);
    q_counts.push_back(reached ? std::optional<double>(static_cast<double>(*reached)) : std::nullopt);

    std::optional<std::size_t> found;
    for (std::size_t n : config.macro_budgets) {
      const Rng seed = rng.substream("msbl").substream(config.seeds[i]).substream(static_cast<std::uint64_t>(n));
      const SoftmaxPolicy p = train_toy_macro(env, config.macro_level, n, seed);
      if (env.expected_macro_value(p) >= goal) {
        found = n;
        break;
      }
    }
    out.msbl_samples.push_back(found);
    m_counts.push_back(found ? std::optional<double>(static_cast<double>(*found)) : std::nullopt);
  }
  const auto n0 = censored_median(q_counts);
  const auto n2 = censored_median(m_counts);
  out.censored = !n0 || !n2;
  out.n0 = n0.value_or(std::numeric_limits<double>::infinity());
  out.n_l2 = n2.value_or(std::numeric_limits<double>::infinity());
  out.ratio = out.censored ? std::numeric_limits<double>::quiet_NaN() : out.n0 / out.n_l2;
  return out;
}

}  // namespace msbl
