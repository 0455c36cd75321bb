// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "msbl/baselines.hpp"
#include "msbl/environments/bandit.hpp"
#include "msbl/estimators.hpp"
#include "msbl/experiment.hpp"
#include "msbl/optim.hpp"
#include "msbl/pacbayes.hpp"

using namespace msbl;

namespace {

// Pinned tolerances.
constexpr double kPacTolerancePp = 0.5;
constexpr double kPacSeconds = 1.0;
constexpr double kBandLo = 10.0, kBandHi = 62.0, kFallbackRatio = 5.0;
constexpr double kToySecondsPerK = 600.0;
constexpr int kIpsDatasets = 1000;
constexpr std::size_t kIpsRows = 200;
constexpr double kIpsSigmas = 3.0;
constexpr int kGradInstances = 24;
constexpr double kGradStep = 1e-5, kGradTolerance = 1e-4;
constexpr double kPooledSes = 1.0;
constexpr double kNormTolerance = 1e-12;
constexpr double kStructuralSeconds = 300.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << ']';
    }
  }
};

double diff_se(const AggregateRow& a, const AggregateRow& b) {
  return std::sqrt(a.pooled_se * a.pooled_se + b.pooled_se * b.pooled_se);
}

// a beats b by more than kPooledSes pooled standard errors of the difference.
bool beats(const AggregateRow* a, const AggregateRow* b) {
  return a && b && a->mean - b->mean > kPooledSes * diff_se(*a, *b);
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << std::fixed << x;
  return s.str();
}

Verdict criterion1() {
  Verdict v;
  const auto t0 = Clock::now();
  const NumericalExample r = reproduce_numerical_example();
  const double secs = seconds_since(t0);
  v.detail << "reduction " << fmt(100 * r.reduction, 2) << "%, with L1 " << fmt(100 * r.reduction_with_l1, 2)
           << "%, " << fmt(secs, 6) << " s";
  v.require(r.dim == 50 && r.prior_variance == 200.0 && r.target_variance == 1.0 && r.micro_variance == 1.0 &&
                r.c == 5000.0 && r.horizon == 10,
            "example constants");
  v.require(std::abs(100 * r.reduction - 98.0) <= kPacTolerancePp, "98% within 0.5pp");
  v.require(std::abs(100 * r.reduction_with_l1 - 88.2) <= kPacTolerancePp, "88.2% within 0.5pp");
  v.require(secs < kPacSeconds, "runtime < 1 s");
  return v;
}

Verdict criterion2() {
  Verdict v;
  const ExperimentConfig cfg = default_config("toy-rl");
  const RunOutput out = run_experiment(cfg, 1);
  std::map<std::string, double> secs;
  for (const auto& t : out.timings) secs[t.sweep] += t.seconds;
  bool in_band = true, fallback = true;
  for (int k : cfg.sweep.k) {
    const std::string sweep = "k=" + std::to_string(k);
    const auto& e = out.extra.at(sweep);
    const bool censored = e.at("censored").get<bool>();
    const double ratio = censored ? std::nan("") : e.at("ratio").get<double>();
    v.detail << sweep << ": n0 " << (censored ? "censored" : fmt(e.at("n0").get<double>(), 0)) << ", nL2 "
             << (censored ? "censored" : fmt(e.at("n_l2").get<double>(), 0)) << ", ratio " << fmt(ratio, 1) << ", "
             << fmt(secs[sweep], 1) << " s; ";
    in_band = in_band && !censored && ratio >= kBandLo && ratio <= kBandHi;
    fallback = fallback && !censored && ratio >= kFallbackRatio;
    v.require(secs[sweep] < kToySecondsPerK, sweep + " runtime < 10 min");
  }
  v.detail << (in_band ? "inside [10, 62]" : "outside [10, 62]; fallback ratio >= 5 " + std::string(fallback ? "holds" : "fails"));
  v.require(in_band || fallback, "band or fallback");
  return v;
}

Verdict criterion3() {
  Verdict v;
  Matrix means(2, 3);
  means << 0.2, 0.7, 0.4, 0.9, 0.1, 0.5;
  const FiniteBandit env(means);
  const UniformPolicy logger(3);
  const NetworkSpec net{2, {8}, 3};
  Rng rng = make_rng(3).substream("acceptance");
  for (int p = 0; p < 5; ++p) {
    const SoftmaxPolicy target(net, init_parameters(net, rng) * 3.0, 1.0);
    const double truth = brute_force_value(target, env).value;
    double sum = 0.0, sum_sq = 0.0;
    for (int d = 0; d < kIpsDatasets; ++d) {
      const double est = ips_value(target, collect_bandit_data(env, logger, kIpsRows, rng)).value;
      sum += est;
      sum_sq += est * est;
    }
    const double mean = sum / kIpsDatasets;
    const double se = std::sqrt((sum_sq / kIpsDatasets - mean * mean) / (kIpsDatasets - 1));
    const double z = std::abs(mean - truth) / se;
    v.detail << "policy " << p << " |z| " << fmt(z, 2) << "; ";
    v.require(z <= kIpsSigmas, "policy " + std::to_string(p) + " within 3 SE");
  }
  return v;
}

Verdict criterion4() {
  Verdict v;
  Rng rng = make_rng(4).substream("acceptance");
  double worst = 0.0;
  for (int i = 0; i < kGradInstances; ++i) {
    const int dim = 2 + static_cast<int>(rng.below(3));
    const int actions = 2 + static_cast<int>(rng.below(4));
    std::vector<int> hidden;
    const int layers = static_cast<int>(rng.below(3));
    for (int l = 0; l < layers; ++l) hidden.push_back(2 + static_cast<int>(rng.below(8)));
    const NetworkSpec net{dim, hidden, actions};
    Matrix means(dim, actions);
    for (int c = 0; c < dim; ++c)
      for (int a = 0; a < actions; ++a) means(c, a) = rng.uniform();
    const FiniteBandit env(means);
    const LoggedDataset data = collect_bandit_data(env, UniformPolicy(actions), 50 + rng.below(100), rng);
    // Zero initial biases put hidden units exactly on the ReLU kink for one-hot inputs; jitter every
    // coordinate so the check runs at a differentiable point.
    Vector theta = init_parameters(net, rng);
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) += rng.normal(0.0, 0.1);
    const SoftmaxPolicy pi(net, theta, 0.5 + rng.uniform());
    const auto f = [&](const Vector& t) { return ips_value(pi.with_parameters(t), data).value; };
    worst = std::max(worst, finite_difference_check(pi.parameters(), f, ips_gradient(pi, data), kGradStep, rng));
  }
  v.detail << kGradInstances << " instances, max relative error " << worst;
  v.require(worst <= kGradTolerance, "relative error <= 1e-4");
  return v;
}

Verdict criterion5() {
  Verdict v;
  ExperimentConfig cfg = default_config("conv");
  cfg.sweep.sigma_f = {0.1};
  const auto& spec = std::get<ConvEnvSpec>(cfg.environment);
  v.require(spec.train_users == 1500 && spec.test_users == 300 && cfg.seeds.size() == 5, "1500/300 users, 5 seeds");
  const auto agg = aggregate(run_experiment(cfg, 1).rows);
  const std::string sweep = "sigma_f=0.1";
  const auto at = [&](const std::string& p, int level) { return find_aggregate(agg, sweep, p, level); };
  const AggregateRow *l3 = at("l3-msbl", 3), *l2 = at("l2-msbl", 3), *l1 = at("l1-only", 3), *rnd = at("random-l3", 3);
  for (const auto* a : {l3, l2, l1, rnd})
    if (a) v.detail << a->policy << " r3 " << fmt(a->mean) << " (se " << fmt(a->pooled_se) << "); ";
  v.require(beats(l3, l2), "3-level > 2-level");
  v.require(beats(l2, l1), "2-level > L1-only");
  v.require(beats(l3, rnd), "3-level > random-L3");
  const AggregateRow* msbl_l2 = at("l2-msbl", 2);
  double best_fixed = -1.0;
  for (const auto& a : agg)
    if (a.sweep == sweep && a.level == 2 && a.policy.rfind("fixed-tau-", 0) == 0) best_fixed = std::max(best_fixed, a.mean);
  v.detail << "L2: msbl " << (msbl_l2 ? fmt(msbl_l2->mean) : "missing") << " vs best fixed " << fmt(best_fixed);
  v.require(msbl_l2 && best_fixed >= 0.0 && msbl_l2->mean > best_fixed, "L2 MSBL > every fixed temperature");
  return v;
}

Verdict criterion6() {
  Verdict v;
  const ExperimentConfig cfg = default_config("ranking");
  const auto agg = aggregate(run_experiment(cfg, 1).rows);
  std::map<std::string, std::vector<const AggregateRow*>> by_sweep;
  for (const auto& a : agg)
    if (a.level == 2) by_sweep[a.sweep].push_back(&a);
  int checked_groups = 0, checked_noise = 0;
  for (const auto& [sweep, rows] : by_sweep) {
    int groups = 0, k = 0;
    double sigma = 0.0;
    if (std::sscanf(sweep.c_str(), "groups=%d,k=%d,sigma_s=%lf", &groups, &k, &sigma) != 3) continue;
    const AggregateRow* msbl = find_aggregate(agg, sweep, "msbl", 2);
    const AggregateRow* rnd = find_aggregate(agg, sweep, "random-boost", 2);
    if (k == 10 && sigma == 0.0 && groups >= 2 && groups <= 5) {
      ++checked_groups;
      int fixed = 0;
      for (const auto* a : rows)
        if (a->policy.rfind("fixed-boost-", 0) == 0) {
          ++fixed;
          v.require(beats(msbl, a), sweep + " msbl > " + a->policy);
        }
      v.require(fixed == groups, sweep + " has every fixed boost");
      v.require(beats(msbl, rnd), sweep + " msbl > random-boost");
    }
    if (groups == 2 && k == 10 && sigma <= 1.0) {
      ++checked_noise;
      v.require(beats(msbl, rnd), sweep + " msbl > random-boost");
    }
    if (msbl && rnd && k == 10 && (groups == 2 || sigma == 0.0))
      v.detail << sweep << ": " << fmt(msbl->mean) << " vs random " << fmt(rnd->mean) << "; ";
  }
  v.require(checked_groups == 4, "groups 2..5 swept");
  v.require(checked_noise >= 11, "sigma_s <= 1.0 swept");
  return v;
}

Verdict criterion7() {
  Verdict v;
  const auto t0 = Clock::now();
  Rng rng = make_rng(7).substream("acceptance");

  double worst_norm = 0.0;
  bool full_support = true;
  for (int i = 0; i < 1000; ++i) {
    Vector s(2 + static_cast<int>(rng.below(30)));
    for (Eigen::Index j = 0; j < s.size(); ++j) s(j) = 10.0 * rng.normal();
    const Vector p = softmax(s, 0.1 + 2.0 * rng.uniform());
    worst_norm = std::max(worst_norm, std::abs(p.sum() - 1.0));
    full_support = full_support && (p.array() > 0.0).all();
  }
  v.require(worst_norm <= kNormTolerance && full_support, "softmax normalization");

  bool monotone = true;
  const NetworkSpec net{3, {8}, 6};
  for (int i = 0; i < 50; ++i) {
    const SoftmaxPolicy base(net, init_parameters(net, rng) * 2.0, 1.0);
    Vector x(3);
    for (int j = 0; j < 3; ++j) x(j) = rng.normal();
    double prev = -1.0;
    for (double tau : {0.0, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0}) {
      const double h = entropy(apply_policy_modification(base, MacroAction::temperature(tau)).action_distribution(x));
      monotone = monotone && h >= prev - 1e-12;
      prev = h;
    }
  }
  v.require(monotone, "entropy monotone in temperature");

  bool dominated = true;
  Matrix means(2, 2);
  means << 0.2, 0.7, 0.9, 0.1;
  const FiniteBandit env(means);
  for (int i = 0; i < 50; ++i) {
    const LoggedDataset d = collect_bandit_data(env, UniformPolicy(2), 100, rng);
    const SoftmaxPolicy target(NetworkSpec{2, {}, 2}, init_parameters(NetworkSpec{2, {}, 2}, rng) * 4.0, 1.0);
    double prev = clipped_ips_value(target, d, kNoClip).value;
    for (double m : {100.0, 10.0, 1.5, 1.0, 0.5}) {
      const double c = clipped_ips_value(target, d, m).value;
      dominated = dominated && c <= prev + 1e-15;
      prev = c;
    }
  }
  v.require(dominated, "clipping dominance");

  ExperimentConfig toy = default_config("toy-rl");
  toy.levels[1].samples = 128;
  toy.levels[1].optimizer.epochs = 40;
  const auto env_toy = make_environment(toy);
  const LevelStack stack = make_stack(toy, *env_toy);
  const LearningResult flat = policy_learning_two_level(*env_toy, stack, make_rng(1));
  const LearningResult rec = policy_learning_recursive(*env_toy, stack, make_rng(1));
  const auto& pf = dynamic_cast<const SoftmaxPolicy&>(*flat.policy.policies[1]);
  const auto& pr = dynamic_cast<const SoftmaxPolicy&>(*rec.policy.policies[1]);
  v.require(pf.parameters() == pr.parameters(), "recursive == flat bitwise");

  ExperimentConfig small = toy;
  small.seeds = {1, 2};
  small.sweep.k = {2};
  small.toy_rl.asymptote_episodes = 5000;
  small.toy_rl.macro_budgets = {8, 16, 32};
  v.require(results_csv(run_experiment(small, 1).rows) == results_csv(run_experiment(small, 2).rows),
            "results.csv determinism");

  const double secs = seconds_since(t0);
  v.detail << "max |sum-1| " << worst_norm << ", " << fmt(secs, 1) << " s";
  v.require(secs < kStructuralSeconds, "suite < 5 min");
  return v;
}

}  // namespace

// Optional arguments select criteria by number; all run by default.
int main(int argc, char** argv) {
  std::set<std::size_t> only;
  for (int a = 1; a < argc; ++a) only.insert(std::stoul(argv[a]));
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"PAC-Bayes reproduction", criterion1},      {"toy RL sample efficiency", criterion2},
      {"IPS unbiasedness", criterion3},            {"gradient correctness", criterion4},
      {"conversational 3-level ordering", criterion5}, {"ranking dominance and robustness", criterion6},
      {"structural invariants", criterion7}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    failed += v.pass ? 0 : 1;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (v.pass ? "PASS" : "FAIL") << " - "
              << v.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
