#include "msbl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

namespace msbl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- parsing

class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (!v.is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
    }
    try {
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  void forbid(const char* key, const std::string& why) const {
    if (j_.contains(key)) throw ConfigError(where(key) + ": " + why);
  }
  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
  }
  std::string where(const std::string& key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void env_fields(ToyEnvSpec& s, F&& f) {
  f("n_items", s.n_items);
  f("context_count", s.context_count);
  f("k", s.k);
  f("horizon", s.horizon);
  f("boost_levels", s.boost_levels);
  f("max_boost", s.max_boost);
  f("target_level", s.target_level);
}

template <typename F>
void env_fields(ConvEnvSpec& s, F&& f) {
  f("context_dim", s.context_dim);
  f("groups", s.groups);
  f("micro_actions", s.micro_actions);
  f("micro_horizon", s.micro_horizon);
  f("temperatures", s.temperatures);
  f("l2_horizon", s.l2_horizon);
  f("l3_weights", s.l3_weights);
  f("beta_u", s.beta_u);
  f("gamma_u", s.gamma_u);
  f("sigmoid_scale", s.sigmoid_scale);
  f("sigmoid_shift", s.sigmoid_shift);
  f("threshold", s.threshold);
  f("sigma_f", s.sigma_f);
  f("train_users", s.train_users);
  f("test_users", s.test_users);
  f("vocabulary", s.vocabulary);
  f("response_length", s.response_length);
  f("chain_probability", s.chain_probability);
  f("optimal_action", s.optimal_action);
  f("construction_seed", s.construction_seed);
}

template <typename F>
void env_fields(RankEnvSpec& s, F&& f) {
  f("groups", s.groups);
  f("items_per_group", s.items_per_group);
  f("horizon", s.horizon);
  f("k", s.k);
  f("preferred", s.preferred);
  f("other", s.other);
  f("sigma_s", s.sigma_s);
  f("score_lo", s.score_lo);
  f("score_hi", s.score_hi);
  f("boost", s.boost);
  f("return_floor", s.return_floor);
  f("context_noise", s.context_noise);
  f("construction_seed", s.construction_seed);
}

template <typename F>
void level_fields(LevelTraining& l, bool with_samples, F&& f) {
  f("hidden", l.hidden);
  f("beta", l.beta);
  if (with_samples) f("samples", l.samples);
  f("learning_rate", l.optimizer.learning_rate);
  f("weight_decay", l.optimizer.weight_decay);
  f("batch_size", l.optimizer.batch_size);
  f("epochs", l.optimizer.epochs);
  f("beta1", l.optimizer.beta1);
  f("beta2", l.optimizer.beta2);
  f("epsilon", l.optimizer.epsilon);
}

template <typename F>
void toy_rl_fields(ToyRlSettings& t, F&& f) {
  f("alpha", t.q.alpha);
  f("gamma", t.q.gamma);
  f("epsilon_start", t.q.epsilon_start);
  f("epsilon_end", t.q.epsilon_end);
  f("decay_episodes", t.q.decay_episodes);
  f("eval_every", t.q.eval_every);
  f("asymptote_episodes", t.asymptote_episodes);
  f("reach_tolerance", t.reach_tolerance);
  f("macro_budgets", t.macro_budgets);
}

const char* env_type(const std::string& experiment) {
  if (experiment == "toy-rl") return "toy";
  if (experiment == "conv") return "conversational";
  if (experiment == "ranking") return "ranking";
  throw ConfigError("experiment must be one of toy-rl, conv, ranking (got '" + experiment + "')");
}

std::vector<std::string> allowed_baselines(const std::string& experiment) {
  if (experiment == "toy-rl") return {"q-learning", "uniform", "micro-only", "skyline"};
  if (experiment == "conv") return {"l1-only", "l2-msbl", "random-l3", "fixed-temperature", "skyline"};
  return {"fixed-boost", "random-boost", "skyline"};
}

bool enabled(const ExperimentConfig& c, const std::string& name) {
  return std::find(c.baselines.begin(), c.baselines.end(), name) != c.baselines.end();
}

std::string short_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ------------------------------------------------------------ execution

struct UnitOut {
  std::vector<ResultRow> rows;
  std::vector<std::pair<std::string, std::string>> tables;
  ordered_json extra;
  double seconds = 0.0;
};

struct Unit {
  std::string sweep;
  std::uint64_t seed = 0;
  std::function<UnitOut()> fn;
};

std::vector<UnitOut> run_units(const std::vector<Unit>& units, int jobs) {
  std::vector<UnitOut> out(units.size());
  std::vector<std::exception_ptr> errors(units.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < units.size(); i = next++) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        out[i] = units[i].fn();
      } catch (...) {
        errors[i] = std::current_exception();
      }
      out[i].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(units.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < units.size(); ++i)
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw Error("[" + units[i].sweep + (units[i].seed ? ", seed " + std::to_string(units[i].seed) : "") + "] " +
                    e.what());
      }
    }
  return out;
}

void add_rows(std::vector<ResultRow>& rows, const std::string& experiment, const std::string& sweep,
              std::uint64_t seed, const std::string& policy, const InferenceResult& r) {
  for (const auto& l : r.levels)
    rows.push_back({experiment, sweep, seed, policy, l.level, l.mean, l.standard_error, l.episodes});
}

std::string seed_dir(const std::string& run_dir, const std::string& sweep, std::uint64_t seed, const std::string& name) {
  return run_dir + "/" + sweep + "/seed-" + std::to_string(seed) + "/" + name;
}

// ---- toy-rl

struct ToyLevels {
  double l1 = 0.0, l2 = 0.0;
};

ToyLevels toy_policy_levels(const ToyEnv& env, const StochasticPolicy& macro) {
  ToyLevels v;
  const int contexts = env.spec().context_count;
  for (int c = 0; c < contexts; ++c) {
    const Vector p = macro.action_distribution(env.context(c).features);
    for (int b = 0; b < env.spec().boost_levels; ++b) {
      v.l1 += p(b) * env.micro_reward(c, env.subset_index(env.micro_select(c, b))) / contexts;
      v.l2 += p(b) * env.macro_reward(c, b) / contexts;
    }
  }
  return v;
}

ToyLevels toy_q_levels(const ToyEnv& env, const QTable& q) {
  ToyLevels v;
  const int contexts = env.spec().context_count, horizon = env.spec().horizon;
  for (int c = 0; c < contexts; ++c)
    for (int t = 0; t < horizon; ++t) v.l1 += env.micro_reward(c, q.greedy(c, t)) / (contexts * horizon);
  v.l2 = greedy_value(env, q);
  return v;
}

UnitOut run_toy_unit(const ExperimentConfig& cfg, int k, const std::string& sweep, const std::string& run_dir) {
  ExperimentConfig point = cfg;
  std::get<ToyEnvSpec>(point.environment).k = k;
  const ToyEnv env(std::get<ToyEnvSpec>(point.environment));
  const LevelStack stack = make_stack(point, env);
  UnitOut out;
  const std::string ex = cfg.experiment;
  const int boosts = env.spec().boost_levels;
  auto push = [&](std::uint64_t seed, const std::string& policy, ToyLevels v, std::size_t episodes) {
    out.rows.push_back({ex, sweep, seed, policy, 1, v.l1, 0.0, episodes});
    out.rows.push_back({ex, sweep, seed, policy, 2, v.l2, 0.0, episodes});
  };

  EfficiencyConfig ec;
  ec.q = cfg.toy_rl.q;
  ec.asymptote_episodes = cfg.toy_rl.asymptote_episodes;
  ec.reach_tolerance = cfg.toy_rl.reach_tolerance;
  ec.macro_budgets = cfg.toy_rl.macro_budgets;
  ec.macro_level = stack.config(2);
  ec.seeds = cfg.seeds;
  const EfficiencyResult eff = sample_efficiency_ratio(env, ec, make_rng(0).substream("toy-rl").substream(sweep));

  std::ostringstream table;
  table << "seed,q_episodes,msbl_samples\n";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const std::uint64_t seed = cfg.seeds[i];
    const LearningResult r = policy_learning_two_level(env, stack, make_rng(seed));
    push(seed, "msbl", toy_policy_levels(env, *r.policy.policies[1]), stack.config(2).samples);
    if (!run_dir.empty()) save_run(seed_dir(run_dir, sweep, seed, "msbl"), r);
    if (enabled(cfg, "q-learning"))
      push(seed, "q-learning", toy_q_levels(env, eff.q_tables[i]), static_cast<std::size_t>(ec.asymptote_episodes));
    if (enabled(cfg, "uniform")) push(seed, "uniform", toy_policy_levels(env, UniformPolicy(boosts)), 0);
    if (enabled(cfg, "micro-only")) push(seed, "micro-only", toy_policy_levels(env, FixedActionPolicy(boosts, 0)), 0);
    if (enabled(cfg, "skyline")) {
      ToyLevels best;
      for (int c = 0; c < env.spec().context_count; ++c) {
        int arg = 0;
        for (int b = 1; b < boosts; ++b)
          if (env.macro_reward(c, b) > env.macro_reward(c, arg)) arg = b;
        best.l1 += env.micro_reward(c, env.subset_index(env.micro_select(c, arg))) / env.spec().context_count;
        best.l2 += env.macro_reward(c, arg) / env.spec().context_count;
      }
      push(seed, "skyline", best, 0);
    }
    table << seed << ',' << (eff.q_episodes[i] ? std::to_string(*eff.q_episodes[i]) : "censored") << ','
          << (eff.msbl_samples[i] ? std::to_string(*eff.msbl_samples[i]) : "censored") << '\n';
    std::ostringstream curve;
    curve << "episode,expected_value\n";
    for (const auto& p : eff.q_curves[i]) curve << p.episode << ',' << format_real(p.value) << '\n';
    out.tables.emplace_back("curves/" + sweep + "-seed-" + std::to_string(seed) + ".csv", curve.str());
  }
  out.tables.emplace_back("efficiency-" + sweep + ".csv", table.str());
  out.extra = {{"k", k},
               {"target", eff.target},
               {"n0", eff.censored ? json(nullptr) : json(eff.n0)},
               {"n_l2", eff.censored ? json(nullptr) : json(eff.n_l2)},
               {"ratio", eff.censored ? json(nullptr) : json(eff.ratio)},
               {"censored", eff.censored}};
  return out;
}

// ---- conversational

class ConvOracle final : public LowerController {
 public:
  explicit ConvOracle(const ConvEnv& env)
      : env_(env),
        table_(static_cast<std::size_t>(env.spec().groups), std::vector<int>(static_cast<std::size_t>(env.spec().groups), 0)) {}

  std::pair<int, double> act(int level, const ContextSample& x, std::span<const int>, Rng&) override {
    if (!x.group_id) throw Error("oracle: context without ground truth");
    if (level == 1) return {env_.spec().optimal_action[static_cast<std::size_t>(*x.group_id)], 1.0};
    if (level == 2) return {table_[static_cast<std::size_t>(top_group)][static_cast<std::size_t>(*x.group_id)], 1.0};
    throw Error("oracle: no level " + std::to_string(level));
  }

  std::vector<std::vector<int>>& table() { return table_; }
  int top_group = 0;

 private:
  const ConvEnv& env_;
  std::vector<std::vector<int>> table_;  // [level-3 group][level-2 group] -> temperature index
};

// Best temperature per (level-3 group, level-2 group) by Monte Carlo over
// all assignments, with ground-truth agents at level 1.
InferenceResult conv_skyline(const ConvEnv& env, std::size_t search_episodes, std::size_t episodes, const Rng& search,
                             const Rng& eval) {
  ConvOracle oracle(env);
  const int groups = env.spec().groups;
  const int temps = static_cast<int>(env.spec().temperatures.size());
  long combos = 1;
  for (int g = 0; g < groups; ++g) combos *= temps;
  for (int g3 = 0; g3 < groups; ++g3) {
    oracle.top_group = g3;
    double best = -1.0;
    std::vector<int> best_row;
    for (long code = 0; code < combos; ++code) {
      std::vector<int> row;
      for (long c = code, g = 0; g < groups; ++g, c /= temps) row.push_back(static_cast<int>(c % temps));
      oracle.table()[static_cast<std::size_t>(g3)] = row;
      const Rng base = search.substream(static_cast<std::uint64_t>(g3)).substream(static_cast<std::uint64_t>(code));
      double sum = 0.0;
      for (std::size_t e = 0; e < search_episodes; ++e) {
        Rng r = base.substream(static_cast<std::uint64_t>(e));
        const ContextSample x = env.sample_context(3, r, g3);
        sum += env.step(3, x, 0, {}, oracle, r).reward;
      }
      if (sum > best) {
        best = sum;
        best_row = row;
      }
    }
    oracle.table()[static_cast<std::size_t>(g3)] = best_row;
  }
  InferenceResult out;
  std::vector<std::vector<double>> per_level(3);
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng r = eval.substream(static_cast<std::uint64_t>(e));
    const ContextSample x = env.sample_context(3, r);
    oracle.top_group = *x.group_id;
    const StepOutcome o = env.step(3, x, 0, {}, oracle, r);
    for (int k = 0; k < 3; ++k) per_level[static_cast<std::size_t>(k)].push_back(o.level_means[static_cast<std::size_t>(k)]);
  }
  for (int k = 0; k < 3; ++k) {
    const ValueEstimate v = summarize_terms(per_level[static_cast<std::size_t>(k)], "skyline");
    out.levels.push_back({k + 1, v.value, v.standard_error, v.n});
  }
  return out;
}

UnitOut run_conv_unit(const ExperimentConfig& cfg, double sigma_f, std::uint64_t seed, const std::string& sweep,
                      const std::string& run_dir) {
  ExperimentConfig point = cfg;
  std::get<ConvEnvSpec>(point.environment).sigma_f = sigma_f;
  const ConvEnv env(std::get<ConvEnvSpec>(point.environment));
  const LevelStack stack3 = make_stack(point, env);
  const LevelStack stack2 = stack3.truncated(2);
  const Rng seed_rng = make_rng(seed);
  const LearningResult r3 = policy_learning_recursive(env, stack3, seed_rng);
  const LearningResult r2 = policy_learning_recursive(env, stack2, seed_rng);
  if (!run_dir.empty()) {
    save_run(seed_dir(run_dir, sweep, seed, "l3-msbl"), r3);
    save_run(seed_dir(run_dir, sweep, seed, "l2-msbl"), r2);
  }
  const std::size_t episodes = static_cast<std::size_t>(env.spec().test_users);
  const Rng ev = evaluation_rng(seed);
  const int weights = static_cast<int>(env.spec().l3_weights.size());
  const int temps = static_cast<int>(env.spec().temperatures.size());
  const auto& tau = env.spec().temperatures;

  UnitOut out;
  const std::string ex = cfg.experiment;
  add_rows(out.rows, ex, sweep, seed, "l3-msbl", multiscale_inference(r3.policy, env, episodes, ev));

  auto with_fixed_l2 = [&](std::shared_ptr<const StochasticPolicy> l2) {
    MultiScalePolicy p = r3.policy;
    p.policies[1] = std::move(l2);
    p.modulation[1] = Modulation::None;
    p.policies[2] = std::make_shared<FixedActionPolicy>(weights, 0);
    return p;
  };
  if (enabled(cfg, "l2-msbl")) {
    MultiScalePolicy p = with_fixed_l2(r2.policy.policies[1]);
    p.policies[0] = r2.policy.policies[0];
    add_rows(out.rows, ex, sweep, seed, "l2-msbl", multiscale_inference(p, env, episodes, ev));
  }
  if (enabled(cfg, "l1-only")) {
    const int greedy = static_cast<int>(std::min_element(tau.begin(), tau.end()) - tau.begin());
    add_rows(out.rows, ex, sweep, seed, "l1-only",
             multiscale_inference(with_fixed_l2(std::make_shared<FixedActionPolicy>(temps, greedy)), env, episodes, ev));
  }
  if (enabled(cfg, "fixed-temperature"))
    for (int j = 0; j < temps; ++j)
      add_rows(out.rows, ex, sweep, seed, "fixed-tau-" + short_real(tau[static_cast<std::size_t>(j)]),
               multiscale_inference(with_fixed_l2(std::make_shared<FixedActionPolicy>(temps, j)), env, episodes, ev));
  if (enabled(cfg, "random-l3")) {
    MultiScalePolicy p = r3.policy;
    p.policies[2] = std::make_shared<UniformPolicy>(weights);
    add_rows(out.rows, ex, sweep, seed, "random-l3", multiscale_inference(p, env, episodes, ev));
  }
  if (enabled(cfg, "skyline"))
    add_rows(out.rows, ex, sweep, seed, "skyline",
             conv_skyline(env, cfg.skyline_episodes, episodes, seed_rng.substream("skyline"), ev));
  return out;
}

// ---- ranking

struct RankPoint {
  int groups = 2, k = 10;
  double sigma_s = 0.0;
  std::string label() const {
    return "groups=" + std::to_string(groups) + ",k=" + std::to_string(k) + ",sigma_s=" + short_real(sigma_s);
  }
};

std::vector<RankPoint> ranking_points(const ExperimentConfig& cfg) {
  const auto& base = std::get<RankEnvSpec>(cfg.environment);
  const RankPoint b{base.groups, base.k, base.sigma_s};
  std::vector<RankPoint> pts{b};
  auto add = [&](RankPoint p) {
    for (const auto& q : pts)
      if (q.groups == p.groups && q.k == p.k && q.sigma_s == p.sigma_s) return;
    pts.push_back(p);
  };
  for (int g : cfg.sweep.groups) add({g, b.k, b.sigma_s});
  for (int k : cfg.sweep.ranking_size) add({b.groups, k, b.sigma_s});
  for (double s : cfg.sweep.sigma_s) add({b.groups, b.k, s});
  return pts;
}

UnitOut run_ranking_unit(const ExperimentConfig& cfg, const RankPoint& pt, std::uint64_t seed, const std::string& run_dir) {
  ExperimentConfig point = cfg;
  auto& spec = std::get<RankEnvSpec>(point.environment);
  spec.groups = pt.groups;
  spec.k = pt.k;
  spec.sigma_s = pt.sigma_s;
  const RankEnv env(spec);
  const LevelStack stack = make_stack(point, env);
  const std::string sweep = pt.label();
  const LearningResult r = policy_learning_two_level(env, stack, make_rng(seed));
  if (!run_dir.empty()) save_run(seed_dir(run_dir, sweep, seed, "msbl"), r);
  const Rng ev = evaluation_rng(seed);
  UnitOut out;
  const std::string ex = cfg.experiment;
  add_rows(out.rows, ex, sweep, seed, "msbl", multiscale_inference(r.policy, env, cfg.evaluation_episodes, ev));
  auto with_l2 = [&](std::shared_ptr<const StochasticPolicy> l2) {
    MultiScalePolicy p = r.policy;
    p.policies[1] = std::move(l2);
    return p;
  };
  if (enabled(cfg, "fixed-boost"))
    for (int j = 0; j < pt.groups; ++j)
      add_rows(out.rows, ex, sweep, seed, "fixed-boost-" + std::to_string(j),
               multiscale_inference(with_l2(std::make_shared<FixedActionPolicy>(pt.groups, j)), env,
                                    cfg.evaluation_episodes, ev));
  if (enabled(cfg, "random-boost"))
    add_rows(out.rows, ex, sweep, seed, "random-boost",
             multiscale_inference(with_l2(std::make_shared<UniformPolicy>(pt.groups)), env, cfg.evaluation_episodes,
                                  ev));
  if (enabled(cfg, "skyline")) {
    NoController none;
    const Skyline s = oracle_skyline(env, 2, none, cfg.skyline_episodes, ev.substream("skyline"));
    out.rows.push_back({ex, sweep, seed, "skyline", 2, s.value, s.standard_error,
                        cfg.skyline_episodes * static_cast<std::size_t>(pt.groups * pt.groups)});
  }
  return out;
}

std::string tradeoff_table(const std::vector<AggregateRow>& agg) {
  std::ostringstream out;
  out << "sweep,policy,clicks,clicks_sd,return_rate,return_rate_sd\n";
  for (const auto& a : agg) {
    if (a.level != 2) continue;
    const AggregateRow* clicks = find_aggregate(agg, a.sweep, a.policy, 1);
    out << '"' << a.sweep << "\"," << a.policy << ',' << (clicks ? format_real(clicks->mean) : "") << ','
        << (clicks ? format_real(clicks->std_dev) : "") << ',' << format_real(a.mean) << ',' << format_real(a.std_dev)
        << '\n';
  }
  return out.str();
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write " + tmp.string());
    f << text;
    if (!f) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string csv_cell(const std::string& s) {
  return s.find_first_of(",\"") == std::string::npos ? s : '"' + s + '"';
}

}  // namespace

// ------------------------------------------------------------------ config

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  env_type(experiment);
  auto level = [](std::vector<int> hidden, double beta, std::size_t samples, double lr, int epochs) {
    LevelTraining l;
    l.hidden = std::move(hidden);
    l.beta = beta;
    l.samples = samples;
    l.optimizer.learning_rate = lr;
    l.optimizer.epochs = epochs;
    l.optimizer.batch_size = 128;
    return l;
  };
  if (experiment == "toy-rl") {
    c.environment = ToyEnvSpec{};
    c.levels = {level({16}, 1.0, 0, 1e-2, 1), level({16}, 0.8, 256, 5e-2, 200)};
    c.baselines = allowed_baselines(experiment);
    c.sweep.k = {2, 4, 6};
  } else if (experiment == "conv") {
    c.environment = ConvEnvSpec{};
    c.levels = {level({32}, 1.0, 0, 1e-2, 60), level({32}, 0.8, 0, 1e-2, 100), level({16}, 0.8, 0, 1e-2, 100)};
    c.baselines = allowed_baselines(experiment);
    c.sweep.sigma_f = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  } else {
    RankEnvSpec s;
    s.k = 10;
    c.environment = s;
    c.levels = {level({16}, 1.0, 0, 1e-2, 1), level({32}, 0.8, 2000, 1e-2, 100)};
    c.baselines = allowed_baselines(experiment);
    c.evaluation_episodes = 1000;
    c.skyline_episodes = 200;
    c.sweep.groups = {2, 3, 4, 5};
    c.sweep.ranking_size = {5, 10, 20, 40};
    c.sweep.sigma_s = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0};
  }
  return c;
}

ExperimentConfig parse_config(const json& j) {
  Obj root(j, "config");
  int version = -1;
  root.read("schema_version", version);
  if (version != kSchemaVersion)
    throw ConfigError("config.schema_version must be " + std::to_string(kSchemaVersion));
  std::string experiment;
  root.read("experiment", experiment);
  ExperimentConfig c = default_config(experiment.empty() ? "missing" : experiment);

  if (root.has("environment")) {
    Obj env(root.at("environment"), "config.environment");
    std::string type = env_type(experiment);
    env.read("type", type);
    if (type != env_type(experiment))
      throw ConfigError("config.environment.type must be '" + std::string(env_type(experiment)) + "' for " + experiment);
    std::visit([&](auto& spec) { env_fields(spec, [&](const char* k, auto& v) { env.read(k, v); }); }, c.environment);
    env.finish();
  }
  const bool conv = experiment == "conv";
  if (root.has("levels")) {
    const json& levels = root.at("levels");
    if (!levels.is_array() || levels.size() != c.levels.size())
      throw ConfigError("config.levels must list " + std::to_string(c.levels.size()) + " levels, bottom first");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      Obj l(levels[i], "config.levels[" + std::to_string(i) + "]");
      if (conv) l.forbid("samples", "conversational levels take their sample count from environment.train_users");
      level_fields(c.levels[i], !conv, [&](const char* k, auto& v) { l.read(k, v); });
      l.finish();
    }
  }
  root.read("baselines", c.baselines);
  root.read("seeds", c.seeds);
  if (conv) root.forbid("evaluation_episodes", "conversational runs evaluate environment.test_users users");
  root.read("evaluation_episodes", c.evaluation_episodes);
  root.read("skyline_episodes", c.skyline_episodes);
  root.read("output", c.output);
  if (root.has("sweep")) {
    Obj s(root.at("sweep"), "config.sweep");
    if (experiment == "toy-rl") s.read("k", c.sweep.k);
    if (experiment == "ranking") {
      s.read("groups", c.sweep.groups);
      s.read("ranking_size", c.sweep.ranking_size);
      s.read("sigma_s", c.sweep.sigma_s);
    }
    if (conv) s.read("sigma_f", c.sweep.sigma_f);
    s.finish();
  }
  if (root.has("toy_rl")) {
    if (experiment != "toy-rl") throw ConfigError("config.toy_rl only applies to toy-rl");
    Obj t(root.at("toy_rl"), "config.toy_rl");
    toy_rl_fields(c.toy_rl, [&](const char* k, auto& v) { t.read(k, v); });
    t.finish();
  }
  root.finish();

  // Semantic checks.
  const auto allowed = allowed_baselines(experiment);
  for (const auto& b : c.baselines)
    if (std::find(allowed.begin(), allowed.end(), b) == allowed.end())
      throw ConfigError("config.baselines: '" + b + "' is not a " + experiment + " baseline");
  if (c.seeds.empty()) throw ConfigError("config.seeds must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    throw ConfigError("config.seeds must be distinct");
  if (c.evaluation_episodes < 1 || c.skyline_episodes < 1) throw ConfigError("episode counts must be >= 1");
  try {
    for (const auto& l : c.levels) {
      l.optimizer.validate();
      NetworkSpec{1, l.hidden, 1}.validate();
      if (!(l.beta > 0.0)) throw Error("beta must be > 0");
    }
    if (experiment == "toy-rl") {
      const auto& t = c.toy_rl;
      if (t.asymptote_episodes < t.q.eval_every) throw Error("toy_rl.asymptote_episodes must cover one evaluation");
      if (t.macro_budgets.empty() || !std::is_sorted(t.macro_budgets.begin(), t.macro_budgets.end()))
        throw Error("toy_rl.macro_budgets must be a non-empty ascending list");
      if (c.levels[1].samples < 1) throw Error("levels[1].samples must be >= 1");
      for (int k : c.sweep.k) {
        ToyEnvSpec s = std::get<ToyEnvSpec>(c.environment);
        s.k = k;
        ToyEnv probe(s);
      }
      ToyEnv probe(std::get<ToyEnvSpec>(c.environment));
    } else if (conv) {
      for (double s : c.sweep.sigma_f)
        if (!(s >= 0.0)) throw Error("sweep.sigma_f values must be >= 0");
      ConvEnv probe(std::get<ConvEnvSpec>(c.environment));
    } else {
      if (c.levels[1].samples < 1) throw Error("levels[1].samples must be >= 1");
      for (const auto& p : ranking_points(c)) {
        RankEnvSpec s = std::get<RankEnvSpec>(c.environment);
        s.groups = p.groups;
        s.k = p.k;
        s.sigma_s = p.sigma_s;
        s.validate();
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["schema_version"] = c.schema_version;
  j["experiment"] = c.experiment;
  ordered_json env;
  env["type"] = env_type(c.experiment);
  auto copy = c.environment;
  std::visit([&](auto& spec) { env_fields(spec, [&](const char* k, auto& v) { env[k] = v; }); }, copy);
  j["environment"] = env;
  ordered_json levels = ordered_json::array();
  for (LevelTraining l : c.levels) {
    ordered_json lj;
    level_fields(l, c.experiment != "conv", [&](const char* k, auto& v) { lj[k] = v; });
    levels.push_back(lj);
  }
  j["levels"] = levels;
  j["baselines"] = c.baselines;
  j["seeds"] = c.seeds;
  if (c.experiment != "conv") j["evaluation_episodes"] = c.evaluation_episodes;
  j["skyline_episodes"] = c.skyline_episodes;
  j["output"] = c.output;
  ordered_json sweep = ordered_json::object();
  if (c.experiment == "toy-rl") sweep["k"] = c.sweep.k;
  if (c.experiment == "ranking") {
    sweep["groups"] = c.sweep.groups;
    sweep["ranking_size"] = c.sweep.ranking_size;
    sweep["sigma_s"] = c.sweep.sigma_s;
  }
  if (c.experiment == "conv") sweep["sigma_f"] = c.sweep.sigma_f;
  j["sweep"] = sweep;
  if (c.experiment == "toy-rl") {
    ordered_json t;
    ToyRlSettings s = c.toy_rl;
    toy_rl_fields(s, [&](const char* k, auto& v) { t[k] = v; });
    j["toy_rl"] = t;
  }
  return j;
}

std::unique_ptr<MultiScaleEnv> make_environment(const ExperimentConfig& config) {
  return std::visit(
      [](const auto& spec) -> std::unique_ptr<MultiScaleEnv> {
        using S = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<S, ToyEnvSpec>) return std::make_unique<ToyEnv>(spec);
        if constexpr (std::is_same_v<S, ConvEnvSpec>) return std::make_unique<ConvEnv>(spec);
        if constexpr (std::is_same_v<S, RankEnvSpec>) return std::make_unique<RankEnv>(spec);
      },
      config.environment);
}

LevelStack make_stack(const ExperimentConfig& config, const MultiScaleEnv& env) {
  const auto specs = env.levels();
  if (config.levels.size() != specs.size()) throw ConfigError("config.levels does not match the environment");
  std::vector<LevelConfig> levels;
  for (const auto& t : config.levels) {
    LevelConfig l;
    l.architecture = NetworkSpec{1, t.hidden, 1};
    l.beta = t.beta;
    l.optimizer = t.optimizer;
    l.samples = t.samples;
    levels.push_back(std::move(l));
  }
  if (const auto* toy = dynamic_cast<const ToyEnv*>(&env)) {
    levels[0].macro_actions = toy->macro_actions();
  } else if (const auto* rank = dynamic_cast<const RankEnv*>(&env)) {
    levels[0].macro_actions = rank->boost_actions();
  } else if (const auto* conv = dynamic_cast<const ConvEnv*>(&env)) {
    levels[0].macro_actions = conv->temperature_actions();
    levels[1].mode = FamilyMode::FeedbackModification;
    levels[1].macro_actions = conv->weight_actions();
    for (auto& l : levels) l.samples = static_cast<std::size_t>(conv->spec().train_users);
  } else {
    throw Error("make_stack: unknown environment");
  }
  return LevelStack(specs, std::move(levels));
}

Rng evaluation_rng(std::uint64_t seed) { return make_rng(seed).substream("eval"); }

InferenceResult evaluate_saved_policy(const ExperimentConfig& config, const std::string& policy_dir,
                                      std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(policy_dir)) throw ConfigError("policy directory '" + policy_dir + "' does not exist");
  const auto env = make_environment(config);
  const LevelStack stack = make_stack(config, *env);
  const int top = stack.size();
  const bool has_top = fs::exists(policy_dir + "/policy-L" + std::to_string(top) + ".csv");
  if (config.experiment == "conv" && !has_top) {
    // Two-level run evaluated under the fixed first weight vector.
    const MultiScalePolicy two = load_run(policy_dir, policy_shape(stack.truncated(2)));
    const auto& conv = static_cast<const ConvEnv&>(*env);
    MultiScalePolicy p = policy_shape(stack);
    p.policies[0] = two.policies[0];
    p.policies[1] = two.policies[1];
    p.modulation[1] = Modulation::None;
    p.policies[2] = std::make_shared<FixedActionPolicy>(static_cast<int>(conv.spec().l3_weights.size()), 0);
    return multiscale_inference(p, *env, static_cast<std::size_t>(conv.spec().test_users), evaluation_rng(seed));
  }
  if (!has_top) throw ConfigError("'" + policy_dir + "' has no top-level policy for this config");
  const MultiScalePolicy p = load_run(policy_dir, policy_shape(stack));
  if (config.experiment == "toy-rl") {
    const ToyLevels v = toy_policy_levels(static_cast<const ToyEnv&>(*env), *p.policies[1]);
    InferenceResult r;
    r.levels = {{1, v.l1, 0.0, 0}, {2, v.l2, 0.0, 0}};
    return r;
  }
  const std::size_t episodes = config.experiment == "conv"
                                   ? static_cast<std::size_t>(std::get<ConvEnvSpec>(config.environment).test_users)
                                   : config.evaluation_episodes;
  return multiscale_inference(p, *env, episodes, evaluation_rng(seed));
}

std::string resolve_output_dir(const ExperimentConfig& config, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!config.output.empty()) return config.output;
  const char* root = std::getenv(kOutputRootVariable);
  return std::string(root && *root ? root : "runs") + "/" + config.experiment;
}

// --------------------------------------------------------------- running

RunOutput run_experiment(const ExperimentConfig& config, int jobs, const std::string& run_dir) {
  std::vector<Unit> units;
  const std::string artifacts = run_dir.empty() ? "" : run_dir + "/artifacts";
  if (config.experiment == "toy-rl") {
    std::vector<int> ks = config.sweep.k;
    if (ks.empty()) ks = {std::get<ToyEnvSpec>(config.environment).k};
    for (int k : ks) {
      const std::string sweep = "k=" + std::to_string(k);
      units.push_back({sweep, 0, [=, &config] { return run_toy_unit(config, k, sweep, artifacts); }});
    }
  } else if (config.experiment == "conv") {
    std::vector<double> sigmas = config.sweep.sigma_f;
    if (sigmas.empty()) sigmas = {std::get<ConvEnvSpec>(config.environment).sigma_f};
    for (double s : sigmas)
      for (std::uint64_t seed : config.seeds) {
        const std::string sweep = "sigma_f=" + short_real(s);
        units.push_back({sweep, seed, [=, &config] { return run_conv_unit(config, s, seed, sweep, artifacts); }});
      }
  } else if (config.experiment == "ranking") {
    for (const RankPoint& p : ranking_points(config))
      for (std::uint64_t seed : config.seeds)
        units.push_back({p.label(), seed, [=, &config] { return run_ranking_unit(config, p, seed, artifacts); }});
  } else {
    throw ConfigError("unknown experiment '" + config.experiment + "'");
  }

  std::vector<UnitOut> results = run_units(units, jobs);
  RunOutput out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    auto& r = results[i];
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    out.tables.insert(out.tables.end(), r.tables.begin(), r.tables.end());
    out.timings.push_back({units[i].sweep, units[i].seed, r.seconds});
    if (!r.extra.is_null()) out.extra[units[i].sweep] = r.extra;
  }
  if (config.experiment == "ranking") out.tables.emplace_back("tradeoff.csv", tradeoff_table(aggregate(out.rows)));
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<AggregateRow> out;
  std::vector<std::vector<const ResultRow*>> members;
  for (const auto& r : rows) {
    std::size_t i = 0;
    while (i < out.size() && !(out[i].sweep == r.sweep && out[i].policy == r.policy && out[i].level == r.level)) ++i;
    if (i == out.size()) {
      out.push_back({r.sweep, r.policy, r.level, 0.0, 0.0, 0.0, 0});
      members.emplace_back();
    }
    members[i].push_back(&r);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& m = members[i];
    const double n = static_cast<double>(m.size());
    double mean = 0.0, se_sq = 0.0;
    for (const auto* r : m) {
      mean += r->mean / n;
      se_sq += r->standard_error * r->standard_error;
    }
    double var = 0.0;
    for (const auto* r : m) var += (r->mean - mean) * (r->mean - mean);
    out[i].mean = mean;
    out[i].std_dev = m.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    out[i].pooled_se = std::sqrt(se_sq) / n;
    out[i].seeds = m.size();
  }
  return out;
}

const AggregateRow* find_aggregate(const std::vector<AggregateRow>& rows, const std::string& sweep,
                                   const std::string& policy, int level) {
  for (const auto& r : rows)
    if (r.sweep == sweep && r.policy == policy && r.level == level) return &r;
  return nullptr;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << "experiment,sweep,seed,policy,level,mean,standard_error,episodes\n";
  for (const auto& r : rows)
    out << r.experiment << ',' << csv_cell(r.sweep) << ',' << r.seed << ',' << r.policy << ',' << r.level << ','
        << format_real(r.mean) << ',' << format_real(r.standard_error) << ',' << r.episodes << '\n';
  return out.str();
}

ordered_json summary_json(const ExperimentConfig& config, const RunOutput& out) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["experiment"] = config.experiment;
  j["seeds"] = config.seeds;
  ordered_json agg = ordered_json::array();
  for (const auto& a : aggregate(out.rows))
    agg.push_back({{"sweep", a.sweep},
                   {"policy", a.policy},
                   {"level", a.level},
                   {"mean", a.mean},
                   {"std_dev", a.std_dev},
                   {"pooled_se", a.pooled_se},
                   {"seeds", a.seeds}});
  j["aggregates"] = agg;
  j["extra"] = out.extra;
  j["config"] = config_to_json(config);
  return j;
}

void write_run(const std::string& dir, const ExperimentConfig& config, const RunOutput& out) {
  const std::filesystem::path root(dir);
  write_atomically(root / "results.csv", results_csv(out.rows));
  write_atomically(root / "summary.json", summary_json(config, out).dump(2) + "\n");
  write_atomically(root / "config.json", config_to_json(config).dump(2) + "\n");
  std::ostringstream t;
  t << "sweep,seed,seconds\n";
  for (const auto& r : out.timings) t << csv_cell(r.sweep) << ',' << r.seed << ',' << format_real(r.seconds) << '\n';
  write_atomically(root / "timings.csv", t.str());
  for (const auto& [name, text] : out.tables) write_atomically(root / name, text);
}

}  // namespace msbl
