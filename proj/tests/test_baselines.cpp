#include <cmath>
#include <limits>

#include "doctest.h"
#include "msbl/baselines.hpp"
#include "msbl/environments/bandit.hpp"
#include "msbl/estimators.hpp"

using namespace msbl;

namespace {

// One-level environment with fixed deterministic rewards per (group, action).
class TableEnv final : public MultiScaleEnv {
 public:
  explicit TableEnv(std::vector<std::vector<double>> means) : means_(std::move(means)) {}
  std::string name() const override { return "table"; }
  std::vector<LevelSpec> levels() const override {
    return {{1, 1, static_cast<int>(means_[0].size()), static_cast<int>(means_.size())}};
  }
  int group_count(int) const override { return static_cast<int>(means_.size()); }
  ContextSample sample_context(int level, Rng& rng, std::optional<int> group) const override {
    const int g = group ? *group : static_cast<int>(rng.below(means_.size()));
    ContextSample x;
    x.level_index = level;
    x.features = Vector::Zero(static_cast<Eigen::Index>(means_.size()));
    x.features(g) = 1.0;
    x.group_id = g;
    return x;
  }
  StepOutcome step(int, const ContextSample& x, int action, std::span<const int>, LowerController&,
                   Rng&) const override {
    StepOutcome s;
    s.reward = means_[static_cast<std::size_t>(*x.group_id)][static_cast<std::size_t>(action)];
    s.level_means = {s.reward};
    return s;
  }
  void dump_ground_truth(std::ostream&) const override {}

 private:
  std::vector<std::vector<double>> means_;
};

ToyEnv single_context_toy(int horizon) {
  ToyEnvSpec s;
  s.n_items = 3;
  s.k = 1;
  s.context_count = 1;
  s.horizon = horizon;
  s.target_level = {3};
  return ToyEnv(s);
}

}  // namespace

TEST_CASE("uniform and fixed policies") {
  const UniformPolicy u = uniform_policy(4);
  const Vector p = u.action_distribution(Vector::Zero(1));
  CHECK((p.array() == 0.25).all());
  CHECK(uniform_policy(1).action_distribution(Vector::Zero(1))(0) == 1.0);
  CHECK(entropy(p) == doctest::Approx(std::log(4.0)));

  const FixedActionPolicy f = fixed_macro_policy(3, 0);
  CHECK(f.action_distribution(Vector::Zero(1))(0) == 1.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(sample_from(f, Vector::Zero(1), rng).first == 0);
  CHECK_THROWS_AS(fixed_macro_policy(3, 3), Error);
  CHECK_THROWS_AS(fixed_macro_policy(3, -1), Error);
}

TEST_CASE("fixed-policy IPS matches the conditional mean of its action") {
  Matrix means(2, 3);
  means << 0.1, 0.6, 0.3, 0.8, 0.2, 0.5;
  const FiniteBandit env(means);
  Rng rng(11);
  const LoggedDataset d = collect_bandit_data(env, UniformPolicy(3), 20000, rng);
  for (int j = 0; j < 3; ++j) {
    const ValueEstimate v = ips_value(fixed_macro_policy(3, j), d);
    CHECK(std::abs(v.value - means.col(j).mean()) <= 3 * v.standard_error);
  }
}

TEST_CASE("skyline") {
  NoController none;
  SUBCASE("forced argmax") {
    const TableEnv env(std::vector<std::vector<double>>{{0.2, 0.9}});
    const Skyline s = oracle_skyline(env, 1, none, 1, Rng(1));
    CHECK(s.groups[0].action == 1);
    CHECK(s.groups[0].value == doctest::Approx(0.9));
    CHECK(s.value == doctest::Approx(0.9));
  }
  SUBCASE("ties go to the lowest index") {
    const TableEnv env({{0.5, 0.5, 0.5}, {0.1, 0.7, 0.7}});
    const Skyline s = oracle_skyline(env, 1, none, 3, Rng(1));
    CHECK(s.groups[0].action == 0);
    CHECK(s.groups[1].action == 1);
  }
  SUBCASE("bad requests") {
    const TableEnv env(std::vector<std::vector<double>>{{0.5}});
    CHECK_THROWS_AS(oracle_skyline(env, 2, none, 1, Rng(1)), Error);
    CHECK_THROWS_AS(oracle_skyline(env, 1, none, 0, Rng(1)), Error);
  }
}

TEST_CASE("skyline dominates fixed and learned macro policies on the toy environment") {
  const ToyEnv env;
  NoController none;
  const Skyline s = oracle_skyline(env, 2, none, 1, Rng(2));
  for (int c = 0; c < 2; ++c) {
    CHECK(s.groups[static_cast<std::size_t>(c)].action == env.spec().target_level[static_cast<std::size_t>(c)]);
    for (int b = 0; b < 8; ++b)
      CHECK(s.groups[static_cast<std::size_t>(c)].value >= s.values[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)]);
  }
  CHECK(s.value == 1.0);
  for (int b = 0; b < 8; ++b) CHECK(s.value >= env.expected_macro_value(fixed_macro_policy(8, b)));
  const SoftmaxPolicy learned = train_toy_macro(env, LevelConfig{}, 32, Rng(5));
  CHECK(s.value >= env.expected_macro_value(learned) - 1e-12);
}

TEST_CASE("Q table") {
  QTable q(2, 3, 4);
  CHECK(q.greedy(1, 2) == 0);
  q.at(1, 2, 3) = 0.5;
  q.at(1, 2, 1) = 0.5;
  CHECK(q.greedy(1, 2) == 1);
  CHECK(q.greedy(0, 0) == 0);
  CHECK_THROWS_AS(QTable(0, 1, 1), Error);
}

TEST_CASE("Q-learning fixed point with one state") {
  const ToyEnv env = single_context_toy(1);
  REQUIRE(env.micro_action_count() == 3);
  QLearningConfig c;
  c.epsilon_start = c.epsilon_end = 0.5;
  c.episodes = 5000;
  Rng rng(3);
  const QLearningResult r = q_learning(env, c, rng);
  for (int a = 0; a < 3; ++a) {
    const double expect = env.contains_preferred(0, a) ? 1.0 : 0.0;
    CHECK(r.table.at(0, 0, a) == doctest::Approx(expect).epsilon(1e-6));
  }
  CHECK(greedy_value(env, r.table) == 1.0);
  CHECK(r.curve.size() == 50);
}

TEST_CASE("Q-learning on a two-step chain matches value iteration and is greedy-stable") {
  const ToyEnv env = single_context_toy(2);
  QLearningConfig c;
  c.epsilon_start = 1.0;
  c.epsilon_end = 0.0;
  // Greedy play on aliased states can cycle for a while before settling.
  c.episodes = 100000;
  c.decay_episodes = 10000;
  Rng r1(4);
  const QLearningResult a = q_learning(env, c, r1);
  const int g0 = a.table.greedy(0, 0), g1 = a.table.greedy(0, 1);
  // Under the greedy pair the chain is deterministic: V1 = r, V0 = V1.
  const double r = (env.contains_preferred(0, g0) + env.contains_preferred(0, g1)) / 2.0;
  CHECK(std::abs(a.table.at(0, 1, g1) - r) <= 1e-6);
  CHECK(std::abs(a.table.at(0, 0, g0) - r) <= 1e-6);

  c.episodes += 1;
  Rng r2(4);
  const QLearningResult b = q_learning(env, c, r2);
  CHECK(b.table.greedy(0, 0) == g0);
  CHECK(b.table.greedy(0, 1) == g1);
}

TEST_CASE("Q-learning on the k=2 toy environment reaches the skyline") {
  const ToyEnv env;
  NoController none;
  const double skyline = oracle_skyline(env, 2, none, 1, Rng(1)).value;
  QLearningConfig c;
  c.episodes = 1000000;
  c.eval_every = 10000;
  for (std::uint64_t seed : {1, 2, 3}) {
    CAPTURE(seed);
    Rng rng(seed);
    const QLearningResult r = q_learning(env, c, rng);
    CHECK(greedy_value(env, r.table) >= skyline - 0.02);
  }
}

TEST_CASE("stop_at ends training early") {
  const ToyEnv env = single_context_toy(1);
  QLearningConfig c;
  c.episodes = 100000;
  c.stop_at = 1.0;
  Rng rng(5);
  const QLearningResult r = q_learning(env, c, rng);
  REQUIRE(r.reached_at.has_value());
  CHECK(*r.reached_at == r.curve.back().episode);
  CHECK(*r.reached_at < 100000);
}

TEST_CASE("censored median") {
  using O = std::optional<double>;
  CHECK(censored_median({O(1), O(2), O(3)}) == O(2));
  CHECK(censored_median({O(4), O(1)}) == O(2.5));
  CHECK(censored_median({O(1), std::nullopt, O(3)}) == O(3));
  CHECK_FALSE(censored_median({O(1), std::nullopt, std::nullopt}).has_value());
  CHECK_FALSE(censored_median({}).has_value());
}

TEST_CASE("sample efficiency with a trivially met target") {
  const ToyEnv env;
  EfficiencyConfig c;
  c.q.eval_every = 8;
  c.asymptote_episodes = 64;
  c.macro_budgets = {8, 16};
  c.seeds = {1, 2, 3, 4, 5};
  c.target = 0.0;
  const EfficiencyResult r = sample_efficiency_ratio(env, c, Rng(9));
  CHECK_FALSE(r.censored);
  for (const auto& n : r.q_episodes) CHECK(n == std::optional<long>(8));
  for (const auto& n : r.msbl_samples) CHECK(n == std::optional<std::size_t>(8));
  CHECK(r.ratio == doctest::Approx(1.0));

  c.target = 2.0;
  const EfficiencyResult never = sample_efficiency_ratio(env, c, Rng(9));
  CHECK(never.censored);
  CHECK(std::isnan(never.ratio));
}
