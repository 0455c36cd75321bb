#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "msbl/core.hpp"
#include "msbl/policies.hpp"
#include "msbl/rng.hpp"

using namespace msbl;

namespace {

std::vector<std::uint64_t> draws(Rng r, int n) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n; ++i) out.push_back(r.next_u64());
  return out;
}

LoggedDataset uniform_dataset(int n, int actions) {
  LoggedDataset d;
  d.context_dim = 2;
  d.action_count = actions;
  Rng rng(3);
  for (int i = 0; i < n; ++i) {
    LoggedInteraction x;
    x.context.features = Vector::Zero(2);
    x.context.features(static_cast<Eigen::Index>(rng.below(2))) = 1.0;
    x.action_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(actions)));
    x.reward = rng.uniform();
    x.propensity = 1.0 / actions;
    d.interactions.push_back(x);
  }
  return d;
}

}  // namespace

TEST_CASE("same seed gives the same stream") {
  CHECK(draws(make_rng(7), 100) == draws(make_rng(7), 100));
  CHECK(draws(make_rng(7), 100) != draws(make_rng(8), 100));
}

TEST_CASE("substreams are reproducible and distinct") {
  const Rng root = make_rng(7);
  const auto env = draws(root.substream("env"), 100);
  const auto train = draws(root.substream("train"), 100);
  CHECK(env == draws(make_rng(7).substream("env"), 100));
  CHECK(env != train);
  int equal = 0;
  for (std::size_t i = 0; i < env.size(); ++i) equal += env[i] == train[i];
  CHECK(equal == 0);
  // Deriving a substream leaves the parent untouched.
  Rng a = make_rng(7), b = make_rng(7);
  (void)a.substream("x");
  CHECK(a.next_u64() == b.next_u64());
  CHECK(draws(root.substream(std::uint64_t{0}), 10) != draws(root.substream(std::uint64_t{1}), 10));
}

TEST_CASE("distribution helpers") {
  Rng r(11);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = r.normal();
    sum += z;
    sum_sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum_sq / n - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7u);
  double g = 0.0;
  for (int i = 0; i < n; ++i) g += static_cast<double>(r.geometric(0.25));
  CHECK(std::abs(g / n - 4.0) < 0.05);
  const std::vector<double> probs = {0.2, 0.0, 0.8};
  int hits[3] = {0, 0, 0};
  for (int i = 0; i < 10000; ++i) ++hits[r.categorical(probs)];
  CHECK(hits[1] == 0);
  CHECK(std::abs(hits[2] / 10000.0 - 0.8) < 0.02);
}

TEST_CASE("level stacks must nest") {
  CHECK_NOTHROW(check_level_stack({{1, 1, 10, 5}, {2, 10, 6, 5}}));
  CHECK_THROWS_AS(check_level_stack({}), Error);
  CHECK_THROWS_AS(check_level_stack({{1, 1, 10, 5}, {2, 0, 6, 5}}), Error);
  CHECK_THROWS_AS(check_level_stack({{1, 1, 0, 5}}), Error);
  CHECK_THROWS_AS(check_level_stack({{1, 1, 10, 5}, {3, 10, 6, 5}}), Error);
}

TEST_CASE("dataset validation") {
  LoggedDataset d = uniform_dataset(50, 4);
  const UniformPolicy logger(4);
  CHECK(validate_dataset(d).ok());
  CHECK(validate_dataset(d, &logger).ok());

  SUBCASE("zero propensity") {
    d.interactions[3].propensity = 0.0;
    const auto rep = validate_dataset(d);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].row == 3);
  }
  SUBCASE("propensity disagrees with the logging policy") {
    d.interactions[5].propensity = 0.3;
    CHECK(validate_dataset(d).ok());
    const auto rep = validate_dataset(d, &logger);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].row == 5);
  }
  SUBCASE("action out of range") {
    d.interactions[0].action_index = 4;
    CHECK_FALSE(validate_dataset(d).ok());
  }
  SUBCASE("non-finite reward") {
    d.interactions[1].reward = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(validate_dataset(d).ok());
  }
}

TEST_CASE("dataset text round trip is exact") {
  LoggedDataset d = uniform_dataset(20, 3);
  d.level_index = 2;
  for (auto& x : d.interactions) {
    x.reward_components = Vector(2);
    x.reward_components << x.reward, 1.0 / 3.0;
  }
  std::stringstream ss;
  write_dataset(ss, d);
  const LoggedDataset back = read_dataset(ss);
  REQUIRE(back.size() == d.size());
  CHECK(back.level_index == 2);
  CHECK(back.action_count == 3);
  CHECK(back.component_count() == 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.interactions[i].context.features == d.interactions[i].context.features);
    CHECK(back.interactions[i].action_index == d.interactions[i].action_index);
    CHECK(back.interactions[i].reward == d.interactions[i].reward);
    CHECK(back.interactions[i].propensity == d.interactions[i].propensity);
    CHECK(back.interactions[i].reward_components == d.interactions[i].reward_components);
  }
}

TEST_CASE("real formatting round-trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(parse_real(format_real(x)) == x);
  CHECK_THROWS_AS(parse_real("abc"), Error);
}
