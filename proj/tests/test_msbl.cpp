#include <filesystem>

#include "doctest.h"
#include "msbl/baselines.hpp"
#include "msbl/environments/conversational.hpp"
#include "msbl/environments/ranking.hpp"
#include "msbl/environments/toy.hpp"
#include "msbl/msbl.hpp"

using namespace msbl;

namespace {

LevelConfig level(std::vector<int> hidden, std::size_t samples, int epochs, double beta = 1.0) {
  LevelConfig c;
  c.architecture = NetworkSpec{1, std::move(hidden), 1};
  c.samples = samples;
  c.beta = beta;
  c.optimizer.learning_rate = 0.05;
  c.optimizer.epochs = epochs;
  c.optimizer.batch_size = 128;
  return c;
}

LevelStack toy_stack(const ToyEnv& env, std::size_t samples) {
  LevelConfig micro;
  micro.macro_actions = env.macro_actions();
  return LevelStack(env.levels(), {micro, level({16}, samples, 100)});
}

LevelStack rank_stack(const RankEnv& env, std::size_t samples) {
  LevelConfig micro;
  micro.macro_actions = env.boost_actions();
  return LevelStack(env.levels(), {micro, level({16}, samples, 60)});
}

LevelStack conv_stack(const ConvEnv& env, std::size_t samples, int epochs) {
  LevelConfig l1 = level({16}, samples, epochs);
  l1.macro_actions = env.temperature_actions();
  LevelConfig l2 = level({16}, samples, epochs);
  l2.mode = FamilyMode::FeedbackModification;
  l2.macro_actions = env.weight_actions();
  return LevelStack(env.levels(), {l1, l2, level({8}, samples, epochs)});
}

const SoftmaxPolicy& softmax_at(const MultiScalePolicy& p, int level) {
  return dynamic_cast<const SoftmaxPolicy&>(*p.policies[static_cast<std::size_t>(level - 1)]);
}

Vector one_hot(int i, int n) {
  Vector v = Vector::Zero(n);
  v(i) = 1.0;
  return v;
}

}  // namespace

TEST_CASE("level stack validation") {
  const ToyEnv env;
  LevelConfig micro;
  CHECK_THROWS_AS(LevelStack(env.levels(), {micro, level({8}, 10, 1)}), Error);  // no macro actions
  micro.macro_actions = env.macro_actions();
  CHECK_NOTHROW(LevelStack(env.levels(), {micro, level({8}, 10, 1)}));
  CHECK_THROWS_AS(LevelStack(env.levels(), {micro}), Error);
  micro.mode = FamilyMode::FeedbackModification;
  CHECK_THROWS_AS(LevelStack(env.levels(), {micro, level({8}, 10, 1)}), Error);
  micro.mode = FamilyMode::PolicyModification;
  LevelConfig top = level({8}, 10, 1);
  top.logger = std::make_shared<UniformPolicy>(3);
  CHECK_THROWS_AS(LevelStack(env.levels(), {micro, top}), Error);

  const ConvEnv conv;
  const LevelStack s3 = conv_stack(conv, 10, 1);
  CHECK(s3.truncated(2).size() == 2);
  CHECK_THROWS_AS(s3.truncated(1), Error);
}

TEST_CASE("logged data collection") {
  const ToyEnv env;
  const LevelStack stack = toy_stack(env, 100);
  const MultiScalePolicy lower = policy_shape(stack);
  Rng rng(1);
  CHECK(collect_logged_data(env, 2, UniformPolicy(8), 0, rng, &lower).empty());
  CHECK_THROWS_AS(collect_logged_data(env, 2, UniformPolicy(8), 5, rng), Error);

  Rng r2(2);
  const LoggedDataset d = collect_logged_data(env, 2, UniformPolicy(8), 4000, r2, &lower);
  CHECK(d.size() == 4000);
  CHECK(validate_dataset(d, nullptr).ok());
  std::vector<double> sum(8, 0.0), sum_sq(8, 0.0), n(8, 0.0);
  for (const auto& x : d.interactions) {
    CHECK(x.propensity == doctest::Approx(1.0 / 8.0));
    CHECK_FALSE(x.context.group_id.has_value());
    const auto a = static_cast<std::size_t>(x.action_index);
    sum[a] += x.reward;
    sum_sq[a] += x.reward * x.reward;
    n[a] += 1.0;
  }
  for (int b = 0; b < 8; ++b) {
    const auto i = static_cast<std::size_t>(b);
    const double truth = 0.5 * (env.macro_reward(0, b) + env.macro_reward(1, b));
    const double mean = sum[i] / n[i];
    const double se = std::sqrt(std::max(sum_sq[i] / n[i] - mean * mean, 0.0) / n[i]);
    CHECK(std::abs(mean - truth) <= 3 * se + 1e-12);
  }

  const ConvEnv conv;
  const MultiScalePolicy conv_lower = policy_shape(conv_stack(conv, 10, 1));
  Rng r3(3);
  // Level 1 of the conversational env is learned, so level-2 collection
  // needs a trained level-1 policy.
  CHECK_THROWS_AS(collect_logged_data(conv, 2, UniformPolicy(6), 3, r3, &conv_lower), Error);
  const LoggedDataset l1 = collect_logged_data(conv, 1, UniformPolicy(10), 50, r3);
  for (const auto& x : l1.interactions) CHECK(x.propensity == doctest::Approx(0.1));
}

TEST_CASE("micro family over temperatures") {
  const ConvEnv conv;
  Rng rng(4);
  const LoggedDataset d = collect_logged_data(conv, 1, UniformPolicy(10), 600, rng);
  OptimizerConfig opt;
  opt.learning_rate = 0.05;
  opt.epochs = 40;
  opt.batch_size = 128;
  Rng train(5);
  const PolicyFamily fam = learn_micro_family(d, FamilyMode::PolicyModification, conv.temperature_actions(),
                                              NetworkSpec{1, {16}, 1}, 1.0, opt, train);
  REQUIRE(fam.size() == 6);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = conv.sample_context(1, rng).features;
    double prev = -1.0;
    for (int m = 0; m < 6; ++m) {
      const double h = entropy(fam.member(m).action_distribution(x));
      CHECK(h >= prev - 1e-12);
      prev = h;
    }
  }
  Rng train2(5);
  const PolicyFamily one = learn_micro_family(d, FamilyMode::PolicyModification, {MacroAction::temperature(1.0)},
                                              NetworkSpec{1, {16}, 1}, 1.0, opt, train2);
  Rng train3(5);
  const SoftmaxPolicy plain = train_policy(d, NetworkSpec{1, {16}, 1}, 1.0, opt, PlainMode{}, train3);
  CHECK(one.member(0).parameters() == plain.parameters());
}

TEST_CASE("macro policy learning") {
  SUBCASE("groups with opposite best boosts") {
    const RankEnv env;
    const LearningResult r = policy_learning_two_level(env, rank_stack(env, 2000), Rng(1));
    const SoftmaxPolicy& top = softmax_at(r.policy, 2);
    CHECK(top.action_distribution(one_hot(0, 2))(0) >= 0.9);
    CHECK(top.action_distribution(one_hot(1, 2))(1) >= 0.9);
  }
  SUBCASE("identical rewards give a near-uniform policy") {
    LoggedDataset d;
    d.context_dim = 2;
    d.action_count = 4;
    // Every (context, action) pair logged equally often, so the IPS
    // objective is flat in the parameters.
    for (int i = 0; i < 1000; ++i) {
      LoggedInteraction x;
      x.context.features = one_hot(i % 2, 2);
      x.action_index = (i / 2) % 4;
      x.propensity = 0.25;
      x.reward = 0.5;
      d.interactions.push_back(x);
    }
    OptimizerConfig opt;
    opt.learning_rate = 0.05;
    opt.epochs = 50;
    Rng train(3);
    const SoftmaxPolicy p = learn_macro_policy(d, 4, NetworkSpec{1, {16}, 1}, 1.0, opt, train);
    for (int c = 0; c < 2; ++c) CHECK(entropy(p.action_distribution(one_hot(c, 2))) >= 0.95 * std::log(4.0));
  }
  SUBCASE("a single macro action") {
    LoggedDataset d;
    d.context_dim = 1;
    d.action_count = 1;
    LoggedInteraction x;
    x.context.features = Vector::Ones(1);
    x.reward = 1.0;
    d.interactions.assign(5, x);
    Rng train(1);
    const SoftmaxPolicy p = learn_macro_policy(d, 1, NetworkSpec{1, {4}, 1}, 1.0, OptimizerConfig{}, train);
    CHECK(p.action_distribution(Vector::Ones(1))(0) == 1.0);
  }
}

TEST_CASE("recursive learning equals the two-level path bit for bit") {
  const ToyEnv toy;
  const LevelStack ts = toy_stack(toy, 256);
  const LearningResult a = policy_learning_two_level(toy, ts, Rng(3));
  const LearningResult b = policy_learning_recursive(toy, ts, Rng(3));
  CHECK(softmax_at(a.policy, 2).parameters() == softmax_at(b.policy, 2).parameters());
  CHECK(a.datasets[1].size() == b.datasets[1].size());

  const ConvEnv conv;
  const LevelStack cs = conv_stack(conv, 150, 5).truncated(2);
  const LearningResult c = policy_learning_two_level(conv, cs, Rng(4));
  const LearningResult d = policy_learning_recursive(conv, cs, Rng(4));
  for (int k = 1; k <= 2; ++k) CHECK(softmax_at(c.policy, k).parameters() == softmax_at(d.policy, k).parameters());
  for (std::size_t i = 0; i < c.datasets[1].size(); ++i)
    CHECK(c.datasets[1].interactions[i].reward == d.datasets[1].interactions[i].reward);
}

TEST_CASE("three-level learning on the conversational env") {
  const ConvEnv conv;
  const LevelStack s = conv_stack(conv, 120, 5);
  const LearningResult r = policy_learning_recursive(conv, s, Rng(5));
  REQUIRE(r.policy.level_count() == 3);
  CHECK_NOTHROW(r.policy.check_compatible(conv));
  CHECK(r.policy.modulation[0] == Modulation::Policy);
  CHECK(r.policy.modulation[1] == Modulation::Feedback);
  CHECK(softmax_at(r.policy, 2).conditional());
  CHECK(softmax_at(r.policy, 1).action_count() == 10);
  CHECK(softmax_at(r.policy, 3).action_count() == 2);
  CHECK(r.datasets[1].component_count() == 2);
  Rng ctx(1);
  const Vector x = conv.sample_context(2, ctx).features;
  CHECK_THROWS_AS(r.policy.distribution(2, x, std::nullopt), Error);
  CHECK(r.policy.distribution(2, x, 1).sum() == doctest::Approx(1.0));

  const InferenceResult e = multiscale_inference(r.policy, conv, 20, Rng(9));
  REQUIRE(e.levels.size() == 3);
  CHECK(e.episodes.size() == 20);
  for (const auto& l : e.levels) CHECK(l.episodes == 20);
}

TEST_CASE("inference") {
  const ToyEnv env;
  const LevelStack stack = toy_stack(env, 64);
  MultiScalePolicy p = policy_shape(stack);
  p.policies[1] = std::make_shared<UniformPolicy>(8);
  CHECK(multiscale_inference(p, env, 0, Rng(1)).levels.empty());
  const InferenceResult a = multiscale_inference(p, env, 4000, Rng(2));
  const InferenceResult b = multiscale_inference(p, env, 4000, Rng(2));
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    CHECK(a.episodes[i].action == b.episodes[i].action);
    CHECK(a.episodes[i].level_means == b.episodes[i].level_means);
  }
  double truth = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int bst = 0; bst < 8; ++bst) truth += env.macro_reward(c, bst) / 16.0;
  CHECK(std::abs(a.levels[1].mean - truth) <= 3 * a.levels[1].standard_error);

  MultiScalePolicy bad = p;
  bad.policies[1] = std::make_shared<UniformPolicy>(7);
  CHECK_THROWS_AS(multiscale_inference(bad, env, 10, Rng(1)), Error);
}

TEST_CASE("saved runs reload exactly") {
  const RankEnv env;
  const LevelStack stack = rank_stack(env, 300);
  const LearningResult r = policy_learning_two_level(env, stack, Rng(6));
  const auto dir = std::filesystem::temp_directory_path() / "msbl-test-save-run";
  std::filesystem::remove_all(dir);
  save_run(dir.string(), r);
  CHECK(std::filesystem::exists(dir / "policy-L2.csv"));
  CHECK(std::filesystem::exists(dir / "data-L2.csv"));
  CHECK_FALSE(std::filesystem::exists(dir / "policy-L1.csv"));
  const MultiScalePolicy back = load_run(dir.string(), policy_shape(stack));
  CHECK(softmax_at(back, 2).parameters() == softmax_at(r.policy, 2).parameters());
  const InferenceResult a = multiscale_inference(r.policy, env, 50, Rng(8));
  const InferenceResult b = multiscale_inference(back, env, 50, Rng(8));
  CHECK(a.levels[1].mean == b.levels[1].mean);
  CHECK(load_dataset((dir / "data-L2.csv").string()).size() == 300);
  std::filesystem::remove_all(dir);
}
