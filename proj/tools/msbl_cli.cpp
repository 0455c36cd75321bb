// Command-line runner for the experiments and the PAC-Bayes report.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <regex>

#include "CLI11.hpp"
#include "msbl/experiment.hpp"
#include "msbl/pacbayes.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  bool dump = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config (JSON)");
  app->add_option("--seed", c.seed, "Single seed, replacing the config's list");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_flag("--dump-config", c.dump, "Print the effective config and exit");
}

msbl::ExperimentConfig base_config(const std::string& experiment, const Common& c) {
  msbl::ExperimentConfig cfg = c.config.empty() ? msbl::default_config(experiment) : msbl::load_config(c.config);
  if (cfg.experiment != experiment)
    throw msbl::ConfigError("config is for '" + cfg.experiment + "', not '" + experiment + "'");
  if (c.seed) cfg.seeds = {*c.seed};
  return cfg;
}

void print_summary(const msbl::RunOutput& out) {
  std::cout << std::left << std::setw(34) << "sweep" << std::setw(18) << "policy" << std::setw(7) << "level"
            << std::right << std::setw(10) << "mean" << std::setw(10) << "sd" << std::setw(10) << "se" << '\n';
  for (const auto& a : msbl::aggregate(out.rows))
    std::cout << std::left << std::setw(34) << a.sweep << std::setw(18) << a.policy << std::setw(7) << a.level
              << std::right << std::fixed << std::setprecision(4) << std::setw(10) << a.mean << std::setw(10)
              << a.std_dev << std::setw(10) << a.pooled_se << '\n';
}

void run(msbl::ExperimentConfig cfg, const Common& c) {
  cfg = msbl::parse_config(msbl::config_to_json(cfg));  // re-validate after flag overrides
  if (c.dump) {
    std::cout << msbl::config_to_json(cfg).dump(2) << '\n';
    return;
  }
  const std::string dir = msbl::resolve_output_dir(cfg, c.out);
  const msbl::RunOutput out = msbl::run_experiment(cfg, c.jobs, dir);
  msbl::write_run(dir, cfg, out);
  print_summary(out);
  if (!out.extra.empty()) std::cout << out.extra.dump(2) << '\n';
  std::cout << "wrote " << dir << '\n';
}

std::uint64_t seed_from_path(const std::string& dir) {
  static const std::regex pattern("seed-([0-9]+)");
  std::smatch m;
  const std::string s = std::filesystem::absolute(dir).lexically_normal().string();
  std::string::const_iterator begin = s.begin();
  std::optional<std::uint64_t> seed;
  while (std::regex_search(begin, s.end(), m, pattern)) {
    seed = std::stoull(m[1].str());
    begin = m[0].second;
  }
  if (!seed) throw msbl::ConfigError("cannot infer the seed from '" + dir + "'; pass --seed");
  return *seed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale policy learning experiments"};
  app.require_subcommand(1);

  bool as_json = false;
  auto* pac = app.add_subcommand("pacbayes", "Sample-savings report for the isotropic Gaussian example");
  pac->add_flag("--json", as_json, "Print JSON");

  Common toy_c, conv_c, rank_c;
  std::vector<int> toy_k;
  auto* toy = app.add_subcommand("toy-rl", "Toy environment: MSBL against Q-learning");
  add_common(toy, toy_c);
  toy->add_option("--k", toy_k, "Subset size(s), replacing the sweep");

  std::vector<double> sigma_f;
  auto* conv = app.add_subcommand("conv", "Three-level conversational surrogate");
  add_common(conv, conv_c);
  conv->add_option("--sigma-f", sigma_f, "Context noise level(s), replacing the sweep");

  std::optional<int> groups, rank_k;
  std::optional<double> sigma_s;
  auto* rank = app.add_subcommand("ranking", "Two-level ranking with boosts and retention");
  add_common(rank, rank_c);
  rank->add_option("--groups", groups, "User groups");
  rank->add_option("--k", rank_k, "Ranking size");
  rank->add_option("--sigma-s", sigma_s, "Score noise");

  std::string policy_dir, env_config;
  std::optional<std::uint64_t> eval_seed;
  auto* eval = app.add_subcommand("eval", "Re-evaluate a saved MSBL policy");
  eval->add_option("policy-dir", policy_dir, "Directory written by a training run")->required();
  eval->add_option("env-config", env_config, "Config of the run (single sweep point)")->required();
  eval->add_option("--seed", eval_seed, "Seed of the run (default: from the seed-N path component)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (pac->parsed()) {
      const msbl::NumericalExample r = msbl::reproduce_numerical_example();
      std::cout << (as_json ? msbl::format_report_json(r) + "\n" : msbl::format_report_text(r));
    } else if (toy->parsed()) {
      msbl::ExperimentConfig cfg = base_config("toy-rl", toy_c);
      if (!toy_k.empty()) cfg.sweep.k = toy_k;
      run(cfg, toy_c);
    } else if (conv->parsed()) {
      msbl::ExperimentConfig cfg = base_config("conv", conv_c);
      if (!sigma_f.empty()) cfg.sweep.sigma_f = sigma_f;
      run(cfg, conv_c);
    } else if (rank->parsed()) {
      msbl::ExperimentConfig cfg = base_config("ranking", rank_c);
      if (groups || rank_k || sigma_s) {
        auto& spec = std::get<msbl::RankEnvSpec>(cfg.environment);
        if (groups) spec.groups = *groups;
        if (rank_k) spec.k = *rank_k;
        if (sigma_s) spec.sigma_s = *sigma_s;
        cfg.sweep.groups.clear();
        cfg.sweep.ranking_size.clear();
        cfg.sweep.sigma_s.clear();
      }
      run(cfg, rank_c);
    } else if (eval->parsed()) {
      const msbl::ExperimentConfig cfg = msbl::load_config(env_config);
      const std::uint64_t seed = eval_seed ? *eval_seed : seed_from_path(policy_dir);
      const msbl::InferenceResult r = msbl::evaluate_saved_policy(cfg, policy_dir, seed);
      std::cout << "level,mean,standard_error,episodes\n";
      for (const auto& l : r.levels)
        std::cout << l.level << ',' << msbl::format_real(l.mean) << ',' << msbl::format_real(l.standard_error) << ','
                  << l.episodes << '\n';
    }
  } catch (const msbl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
