#include "msbl/msbl.hpp"

#include <filesystem>

namespace msbl {

namespace {

std::string level_tag(int level) { return "L" + std::to_string(level); }

Modulation modulation_for(const LevelStack& stack, int level) {
  if (level == stack.size()) return Modulation::None;
  return stack.config(level).mode == FamilyMode::PolicyModification ? Modulation::Policy : Modulation::Feedback;
}

}  // namespace

MultiScalePolicy policy_shape(const LevelStack& stack) {
  MultiScalePolicy p;
  p.levels = stack.specs();
  for (int k = 1; k <= stack.size(); ++k) {
    p.policies.push_back(nullptr);
    p.modulation.push_back(modulation_for(stack, k));
    p.macro_actions.push_back(k < stack.size() ? stack.config(k).macro_actions : std::vector<MacroAction>{});
  }
  return p;
}

namespace {

void check_stack_env(const MultiScaleEnv& env, const LevelStack& stack) {
  if (stack.size() > env.level_count())
    throw Error("stack has " + std::to_string(stack.size()) + " levels, environment " + std::to_string(env.level_count()));
  for (int k = 1; k <= stack.size(); ++k) {
    const LevelSpec e = env.level(k);
    const LevelSpec& s = stack.spec(k);
    if (e.action_count != s.action_count || e.context_dim != s.context_dim)
      throw Error("level " + std::to_string(k) + " of the stack does not match the environment");
  }
}

UniformPolicy default_logger(const LevelStack& stack, int level) { return UniformPolicy(stack.spec(level).action_count); }

const StochasticPolicy& logger_for(const LevelStack& stack, int level, const UniformPolicy& fallback) {
  const auto& l = stack.config(level).logger;
  return l ? *l : static_cast<const StochasticPolicy&>(fallback);
}

// Trains level `level` of `stack` on `data`: a family base below the top,
// a plain macro policy at the top.
std::shared_ptr<const SoftmaxPolicy> train_level(const LevelStack& stack, int level, const LoggedDataset& data,
                                                 Rng& rng) {
  const LevelConfig& c = stack.config(level);
  try {
    if (level < stack.size()) {
      PolicyFamily fam = learn_micro_family(data, c.mode, c.macro_actions, c.architecture, c.beta, c.optimizer, rng);
      return std::make_shared<const SoftmaxPolicy>(fam.base());
    }
    return std::make_shared<const SoftmaxPolicy>(
        learn_macro_policy(data, stack.spec(level).action_count, c.architecture, c.beta, c.optimizer, rng));
  } catch (const Error& e) {
    throw Error("level " + std::to_string(level) + " training: " + e.what());
  }
}

LearningResult learn_up_to(const MultiScaleEnv& env, const LevelStack& stack, int level, const Rng& seed) {
  if (level == 0) {
    LearningResult r;
    r.policy = policy_shape(stack);
    r.datasets.resize(static_cast<std::size_t>(stack.size()));
    return r;
  }
  LearningResult r = learn_up_to(env, stack, level - 1, seed);
  if (!env.level_learned(level)) return r;
  const UniformPolicy fallback = default_logger(stack, level);
  Rng collect = seed.substream("collect-" + level_tag(level));
  LoggedDataset data;
  try {
    data = collect_logged_data(env, level, logger_for(stack, level, fallback), stack.config(level).samples, collect,
                               &r.policy);
  } catch (const Error& e) {
    throw Error("level " + std::to_string(level) + " collection: " + e.what());
  }
  Rng train = seed.substream("train-" + level_tag(level));
  r.policy.policies[static_cast<std::size_t>(level - 1)] = train_level(stack, level, data, train);
  r.datasets[static_cast<std::size_t>(level - 1)] = std::move(data);
  return r;
}

}  // namespace

LevelStack::LevelStack(std::vector<LevelSpec> specs, std::vector<LevelConfig> configs)
    : specs_(std::move(specs)), configs_(std::move(configs)) {
  check_level_stack(specs_);
  if (specs_.size() < 2) throw Error("level stack needs at least two levels");
  if (configs_.size() != specs_.size()) throw Error("level stack: one config per level");
  for (int k = 1; k < size(); ++k) {
    const LevelConfig& c = config(k);
    if (static_cast<int>(c.macro_actions.size()) != spec(k + 1).action_count)
      throw Error("level " + std::to_string(k + 1) + " has " + std::to_string(spec(k + 1).action_count) +
                  " actions but level " + std::to_string(k) + " has " + std::to_string(c.macro_actions.size()) +
                  " macro actions");
    for (const auto& m : c.macro_actions)
      if (m.is_policy_modification() != (c.mode == FamilyMode::PolicyModification))
        throw Error("level " + std::to_string(k) + ": macro action kind does not match the family mode");
  }
  for (const auto& c : configs_) c.optimizer.validate();
  for (int k = 1; k <= size(); ++k)
    if (config(k).logger && config(k).logger->action_count() != spec(k).action_count)
      throw Error("level " + std::to_string(k) + ": logging policy action count mismatch");
}

LevelStack LevelStack::truncated(int levels) const {
  if (levels < 2 || levels > size()) throw Error("truncated stack must keep 2.." + std::to_string(size()) + " levels");
  return LevelStack(std::vector<LevelSpec>(specs_.begin(), specs_.begin() + levels),
                    std::vector<LevelConfig>(configs_.begin(), configs_.begin() + levels));
}

std::optional<PolicyFamily> MultiScalePolicy::family(int level) const {
  if (level < 1 || level >= level_count()) return std::nullopt;
  const auto idx = static_cast<std::size_t>(level - 1);
  auto sp = std::dynamic_pointer_cast<const SoftmaxPolicy>(policies[idx]);
  if (!sp || modulation[idx] == Modulation::None) return std::nullopt;
  return PolicyFamily(sp, macro_actions[idx],
                      modulation[idx] == Modulation::Policy ? FamilyMode::PolicyModification
                                                            : FamilyMode::FeedbackModification);
}

Vector MultiScalePolicy::distribution(int level, const Vector& features, std::optional<int> upper_action) const {
  if (level < 1 || level > level_count()) throw Error("no policy for level " + std::to_string(level));
  const auto idx = static_cast<std::size_t>(level - 1);
  const auto& p = policies[idx];
  if (!p) throw Error("level " + std::to_string(level) + " has no policy");
  const auto* sp = dynamic_cast<const SoftmaxPolicy*>(p.get());
  const Modulation mod = level < level_count() ? modulation[idx] : Modulation::None;
  if (sp == nullptr || mod == Modulation::None) return p->action_distribution(features);
  if (!upper_action) {
    if (mod == Modulation::Feedback) throw Error("level " + std::to_string(level) + " needs a weight vector");
    return p->action_distribution(features);
  }
  const auto& actions = macro_actions[idx];
  if (*upper_action < 0 || *upper_action >= static_cast<int>(actions.size()))
    throw Error("level " + std::to_string(level + 1) + " action out of range");
  const MacroAction& m = actions[static_cast<std::size_t>(*upper_action)];
  if (mod == Modulation::Policy) return apply_policy_modification(*sp, m).action_distribution(features);
  return sp->conditioned_on(std::get<FeedbackWeights>(m.kind).weights).action_distribution(features);
}

void MultiScalePolicy::check_compatible(const MultiScaleEnv& env) const {
  const int k_max = level_count();
  if (k_max < 1 || k_max > env.level_count())
    throw Error("policy has " + std::to_string(k_max) + " levels, environment " + std::to_string(env.level_count()));
  if (policies.size() != levels.size() || modulation.size() != levels.size() || macro_actions.size() != levels.size())
    throw Error("multiscale policy: per-level tables have inconsistent sizes");
  for (int k = 1; k <= k_max; ++k) {
    const auto idx = static_cast<std::size_t>(k - 1);
    const LevelSpec e = env.level(k);
    if (e.action_count != levels[idx].action_count || e.context_dim != levels[idx].context_dim)
      throw Error("level " + std::to_string(k) + " does not match the environment");
    const auto& p = policies[idx];
    if (env.level_learned(k) && !p) throw Error("level " + std::to_string(k) + " has no policy");
    if (p && p->action_count() != e.action_count) throw Error("level " + std::to_string(k) + " action count mismatch");
    if (k < k_max && modulation[idx] != Modulation::None &&
        static_cast<int>(macro_actions[idx].size()) != levels[idx + 1].action_count)
      throw Error("level " + std::to_string(k + 1) + " actions do not index the level " + std::to_string(k) +
                  " family");
  }
}

std::pair<int, double> PolicyController::act(int level, const ContextSample& x, std::span<const int> upper,
                                              Rng& rng) {
  const Vector p =
      policy_.distribution(level, x.features, upper.empty() ? std::nullopt : std::optional<int>(upper.front()));
  const auto a = rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  return {static_cast<int>(a), p(static_cast<Eigen::Index>(a))};
}

LoggedDataset collect_logged_data(const MultiScaleEnv& env, int level, const StochasticPolicy& logger, std::size_t n,
                                  Rng& rng, const MultiScalePolicy* lower) {
  if (level < 1 || level > env.level_count()) throw Error("collect: no level " + std::to_string(level));
  if (level >= 2 && lower == nullptr) throw Error("collect: level " + std::to_string(level) + " needs lower policies");
  const LevelSpec spec = env.level(level);
  if (logger.action_count() != spec.action_count) throw Error("collect: logging policy action count mismatch");
  LoggedDataset data;
  data.level_index = level;
  data.context_dim = spec.context_dim;
  data.action_count = spec.action_count;
  data.logging_policy_id = logger.id();
  data.interactions.reserve(n);
  NoController none;
  std::optional<PolicyController> ctrl;
  if (level >= 2) ctrl.emplace(*lower);
  LowerController& lc = level >= 2 ? static_cast<LowerController&>(*ctrl) : none;
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = rng.substream(static_cast<std::uint64_t>(i));
    LoggedInteraction it;
    it.context = env.sample_context(level, r);
    const auto [a, p] = sample_from(logger, it.context.features, r);
    const StepOutcome o = env.step(level, it.context, a, {}, lc, r);
    it.action_index = a;
    it.propensity = p;
    it.reward = o.reward;
    it.reward_components = o.components;
    it.context.group_id.reset();
    data.interactions.push_back(std::move(it));
  }
  return data;
}

PolicyFamily learn_micro_family(const LoggedDataset& data, FamilyMode mode, std::vector<MacroAction> macro_actions,
                                const NetworkSpec& architecture, double beta, const OptimizerConfig& opt, Rng& rng) {
  TrainingMode tm = PlainMode{};
  if (mode == FamilyMode::FeedbackModification) {
    ConditionalMode cm;
    for (const auto& m : macro_actions) {
      const auto* w = std::get_if<FeedbackWeights>(&m.kind);
      if (w == nullptr) throw Error("feedback family: macro action is not a weight vector");
      cm.weight_set.push_back(w->weights);
    }
    tm = std::move(cm);
  }
  auto base = std::make_shared<const SoftmaxPolicy>(train_policy(data, architecture, beta, opt, tm, rng));
  return PolicyFamily(std::move(base), std::move(macro_actions), mode);
}

SoftmaxPolicy learn_macro_policy(const LoggedDataset& data, int macro_action_count, const NetworkSpec& architecture,
                                 double beta, const OptimizerConfig& opt, Rng& rng) {
  if (data.action_count != macro_action_count)
    throw Error("macro data has " + std::to_string(data.action_count) + " actions, expected " +
                std::to_string(macro_action_count));
  return train_policy(data, architecture, beta, opt, PlainMode{}, rng);
}

LearningResult policy_learning_two_level(const MultiScaleEnv& env, const LevelStack& stack, const Rng& seed) {
  if (stack.size() != 2) throw Error("two-level learning needs a two-level stack");
  check_stack_env(env, stack);
  LearningResult r;
  r.policy = policy_shape(stack);
  r.datasets.resize(2);

  if (env.level_learned(1)) {
    const UniformPolicy fallback = default_logger(stack, 1);
    Rng collect = seed.substream("collect-L1");
    r.datasets[0] = collect_logged_data(env, 1, logger_for(stack, 1, fallback), stack.config(1).samples, collect);
    Rng train = seed.substream("train-L1");
    const LevelConfig& c = stack.config(1);
    PolicyFamily fam =
        learn_micro_family(r.datasets[0], c.mode, c.macro_actions, c.architecture, c.beta, c.optimizer, train);
    r.policy.policies[0] = std::make_shared<const SoftmaxPolicy>(fam.base());
  }

  const UniformPolicy fallback = default_logger(stack, 2);
  Rng collect = seed.substream("collect-L2");
  r.datasets[1] =
      collect_logged_data(env, 2, logger_for(stack, 2, fallback), stack.config(2).samples, collect, &r.policy);
  Rng train = seed.substream("train-L2");
  const LevelConfig& c = stack.config(2);
  r.policy.policies[1] = std::make_shared<const SoftmaxPolicy>(
      learn_macro_policy(r.datasets[1], stack.spec(2).action_count, c.architecture, c.beta, c.optimizer, train));
  return r;
}

LearningResult policy_learning_recursive(const MultiScaleEnv& env, const LevelStack& stack, const Rng& seed) {
  check_stack_env(env, stack);
  return learn_up_to(env, stack, stack.size(), seed);
}

InferenceResult rollout(const MultiScaleEnv& env, int top_level, const StochasticPolicy& top, LowerController& lower,
                        std::size_t episodes, const Rng& rng) {
  InferenceResult out;
  if (episodes == 0) return out;
  std::vector<std::vector<double>> per_level(static_cast<std::size_t>(top_level));
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng r = rng.substream(static_cast<std::uint64_t>(e));
    const ContextSample x = env.sample_context(top_level, r);
    const int a = sample_from(top, x.features, r).first;
    const StepOutcome o = env.step(top_level, x, a, {}, lower, r);
    if (static_cast<int>(o.level_means.size()) != top_level)
      throw Error("environment reported " + std::to_string(o.level_means.size()) + " level means at level " +
                  std::to_string(top_level));
    for (int k = 0; k < top_level; ++k) per_level[static_cast<std::size_t>(k)].push_back(o.level_means[static_cast<std::size_t>(k)]);
    out.episodes.push_back({x.group_id.value_or(-1), a, o.level_means});
  }
  for (int k = 0; k < top_level; ++k) {
    const ValueEstimate v = summarize_terms(per_level[static_cast<std::size_t>(k)], "level-mean");
    out.levels.push_back({k + 1, v.value, v.standard_error, v.n});
  }
  return out;
}

InferenceResult multiscale_inference(const MultiScalePolicy& policy, const MultiScaleEnv& env, std::size_t episodes,
                                     const Rng& rng) {
  policy.check_compatible(env);
  const int top = policy.level_count();
  const auto& tp = policy.policies.back();
  if (!tp) throw Error("top level has no policy");
  PolicyController ctrl(policy);
  return rollout(env, top, *tp, ctrl, episodes, rng);
}

void save_run(const std::string& dir, const LearningResult& result) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < result.policy.policies.size(); ++k) {
    const std::string tag = level_tag(static_cast<int>(k) + 1);
    if (auto sp = std::dynamic_pointer_cast<const SoftmaxPolicy>(result.policy.policies[k]))
      save_policy(dir + "/policy-" + tag + ".csv", *sp);
    if (k < result.datasets.size() && !result.datasets[k].empty())
      save_dataset(dir + "/data-" + tag + ".csv", result.datasets[k]);
  }
}

MultiScalePolicy load_run(const std::string& dir, MultiScalePolicy shape) {
  for (std::size_t k = 0; k < shape.policies.size(); ++k) {
    const std::string path = dir + "/policy-" + level_tag(static_cast<int>(k) + 1) + ".csv";
    if (std::filesystem::exists(path)) shape.policies[k] = std::make_shared<const SoftmaxPolicy>(load_policy(path));
  }
  return shape;
}

}  // namespace msbl
