#include <cmath>

#include "doctest.h"
#include "msbl/environments/bandit.hpp"
#include "msbl/estimators.hpp"
#include "msbl/optim.hpp"

using namespace msbl;

namespace {

Matrix matched_means() {
  Matrix m(2, 2);
  m << 1.0, 0.0, 0.0, 1.0;
  return m;
}

Vector one_hot(int i, int n) {
  Vector v = Vector::Zero(n);
  v(i) = 1.0;
  return v;
}

}  // namespace

TEST_CASE("config validation") {
  OptimizerConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = OptimizerConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = OptimizerConfig{};
  c.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("AdamW step") {
  OptimizerConfig c;
  c.learning_rate = 0.1;
  AdamW opt(c, 3);
  Vector theta = Vector::Zero(3);
  Vector g(3);
  g << 2.0, -0.5, 0.0;
  opt.step(theta, g);
  // The bias-corrected first step moves each coordinate by lr * sign(g).
  CHECK(theta(0) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(theta(1) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(theta(2) == 0.0);

  SUBCASE("decay is decoupled from the gradient") {
    OptimizerConfig d;
    d.learning_rate = 0.1;
    d.weight_decay = 0.5;
    AdamW o(d, 2);
    Vector t = Vector::Constant(2, 2.0);
    o.step(t, Vector::Zero(2));
    CHECK(t(0) == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
  }
}

TEST_CASE("finite-difference checker") {
  Rng rng(1);
  Vector theta(4);
  theta << 1.0, -2.0, 0.5, 3.0;
  const auto quad = [](const Vector& t) { return 0.5 * t.squaredNorm() + t.sum(); };
  const Vector grad = theta + Vector::Ones(4);
  CHECK(finite_difference_check(theta, quad, grad, 1e-5, rng) <= 1e-8);
  Vector wrong = grad;
  wrong(2) += 0.5;
  CHECK(finite_difference_check(theta, quad, wrong, 1e-5, rng) > 1e-2);
}

TEST_CASE("training finds the rewarded action per context") {
  const FiniteBandit env(matched_means());
  Rng rng(21);
  const LoggedDataset d = collect_bandit_data(env, UniformPolicy(2), 2000, rng);
  OptimizerConfig c;
  c.learning_rate = 0.05;
  c.epochs = 100;
  c.batch_size = 128;
  TrainingTrace trace;
  Rng train(4);
  const SoftmaxPolicy pi = train_policy(d, NetworkSpec{1, {16}, 1}, 1.0, c, PlainMode{}, train, &trace);
  CHECK(pi.action_distribution(one_hot(0, 2))(0) >= 0.95);
  CHECK(pi.action_distribution(one_hot(1, 2))(1) >= 0.95);
  CHECK(trace.objective.size() == 100);
  CHECK(trace.best_epoch >= 0);
  CHECK(training_objective(pi, d, PlainMode{}) == doctest::Approx(trace.objective[static_cast<std::size_t>(trace.best_epoch)]));

  SUBCASE("same seed, same parameters") {
    Rng again(4);
    const SoftmaxPolicy pj = train_policy(d, NetworkSpec{1, {16}, 1}, 1.0, c, PlainMode{}, again);
    CHECK(pj.parameters() == pi.parameters());
  }
}

TEST_CASE("one action: nothing to learn") {
  LoggedDataset d;
  d.context_dim = 1;
  d.action_count = 1;
  for (int i = 0; i < 10; ++i) {
    LoggedInteraction x;
    x.context.features = Vector::Ones(1);
    x.reward = 0.3;
    d.interactions.push_back(x);
  }
  OptimizerConfig c;
  c.epochs = 3;
  Rng rng(1);
  const SoftmaxPolicy pi = train_policy(d, NetworkSpec{1, {4}, 1}, 1.0, c, PlainMode{}, rng);
  CHECK(pi.action_distribution(Vector::Ones(1))(0) == 1.0);
}

TEST_CASE("conditional training reproduces per-weight optima") {
  // Component 0 rewards action 0, component 1 rewards action 2.
  Rng rng(8);
  LoggedDataset d;
  d.context_dim = 2;
  d.action_count = 3;
  for (int i = 0; i < 3000; ++i) {
    LoggedInteraction x;
    x.context.features = one_hot(static_cast<int>(rng.below(2)), 2);
    x.action_index = static_cast<int>(rng.below(3));
    x.propensity = 1.0 / 3.0;
    x.reward_components = Vector::Zero(2);
    if (x.action_index == 0) x.reward_components(0) = 1.0;
    if (x.action_index == 2) x.reward_components(1) = 1.0;
    x.reward = x.reward_components.sum();
    d.interactions.push_back(x);
  }
  OptimizerConfig c;
  c.learning_rate = 0.05;
  c.epochs = 60;
  c.batch_size = 128;
  ConditionalMode mode{{one_hot(0, 2), one_hot(1, 2)}};
  Rng train(3);
  const SoftmaxPolicy fam = train_policy(d, NetworkSpec{1, {16}, 1}, 1.0, c, mode, train);
  CHECK(fam.conditional());

  for (int w = 0; w < 2; ++w) {
    LoggedDataset plain = d;
    for (auto& x : plain.interactions) x.reward = x.reward_components(w);
    Rng t2(3);
    const SoftmaxPolicy sep = train_policy(plain, NetworkSpec{1, {16}, 1}, 1.0, c, PlainMode{}, t2);
    for (int ctx = 0; ctx < 2; ++ctx) {
      Eigen::Index a_fam = 0, a_sep = 0;
      fam.conditioned_on(one_hot(w, 2)).action_distribution(one_hot(ctx, 2)).maxCoeff(&a_fam);
      sep.action_distribution(one_hot(ctx, 2)).maxCoeff(&a_sep);
      CHECK(a_fam == a_sep);
      CHECK(a_fam == (w == 0 ? 0 : 2));
    }
  }
}

TEST_CASE("training rejects empty data") {
  Rng rng(1);
  CHECK_THROWS_AS(train_policy(LoggedDataset{}, NetworkSpec{1, {}, 1}, 1.0, OptimizerConfig{}, PlainMode{}, rng),
                  Error);
}
