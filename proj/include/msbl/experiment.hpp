#ifndef MSBL_EXPERIMENT_HPP_
#define MSBL_EXPERIMENT_HPP_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "msbl/baselines.hpp"
#include "msbl/environments/conversational.hpp"
#include "msbl/environments/ranking.hpp"
#include "msbl/environments/toy.hpp"
#include "msbl/msbl.hpp"

namespace msbl {

/// Invalid configuration; the CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutputRootVariable = "MSBL_OUTPUT_ROOT";

struct LevelTraining {
  std::vector<int> hidden = {32};
  double beta = 1.0;
  OptimizerConfig optimizer;
  std::size_t samples = 1000;
};

struct ToyRlSettings {
  QLearningConfig q;
  long asymptote_episodes = 1000000;
  double reach_tolerance = 0.02;
  std::vector<std::size_t> macro_budgets = {8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024};
};

struct Sweep {
  std::vector<int> k;                 // toy-rl
  std::vector<int> groups;            // ranking
  std::vector<int> ranking_size;      // ranking
  std::vector<double> sigma_s;        // ranking
  std::vector<double> sigma_f;        // conv
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string experiment;  // toy-rl | conv | ranking
  std::variant<ToyEnvSpec, ConvEnvSpec, RankEnvSpec> environment;
  std::vector<LevelTraining> levels;
  std::vector<std::string> baselines;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t evaluation_episodes = 300;
  std::size_t skyline_episodes = 100;
  std::string output;
  Sweep sweep;
  ToyRlSettings toy_rl;
};

/// Built-in configuration for `experiment`.
ExperimentConfig default_config(const std::string& experiment);
/// Validates against the schema; unknown keys and bad values throw ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::ordered_json config_to_json(const ExperimentConfig& c);

struct ResultRow {
  std::string experiment;
  std::string sweep;
  std::uint64_t seed = 0;
  std::string policy;
  int level = 1;
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t episodes = 0;
};

struct TimingRow {
  std::string sweep;
  std::uint64_t seed = 0;
  double seconds = 0.0;
};

struct RunOutput {
  std::vector<ResultRow> rows;
  std::vector<TimingRow> timings;
  /// Extra per-experiment tables (file name -> CSV text).
  std::vector<std::pair<std::string, std::string>> tables;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

/// Runs the configured experiment. Seeds and sweep points are spread over
/// `jobs` worker threads; results do not depend on `jobs`. When `run_dir`
/// is non-empty, per-seed policies and datasets are written below it.
RunOutput run_experiment(const ExperimentConfig& config, int jobs = 1, const std::string& run_dir = "");

struct AggregateRow {
  std::string sweep;
  std::string policy;
  int level = 1;
  double mean = 0.0;      // over seeds
  double std_dev = 0.0;   // over seeds
  double pooled_se = 0.0; // sqrt(sum se^2) / seeds
  std::size_t seeds = 0;
};

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);
const AggregateRow* find_aggregate(const std::vector<AggregateRow>& rows, const std::string& sweep,
                                   const std::string& policy, int level);

std::string results_csv(const std::vector<ResultRow>& rows);
nlohmann::ordered_json summary_json(const ExperimentConfig& config, const RunOutput& out);
/// Writes results.csv, summary.json, timings.csv, config.json, and the extra
/// tables into `dir`, each through a temporary file and rename.
void write_run(const std::string& dir, const ExperimentConfig& config, const RunOutput& out);

/// Output directory: explicit flag, else the config's, else
/// $MSBL_OUTPUT_ROOT/<experiment>, else runs/<experiment>.
std::string resolve_output_dir(const ExperimentConfig& config, const std::string& flag);

/// Environment and level stack for a single-point config.
std::unique_ptr<MultiScaleEnv> make_environment(const ExperimentConfig& config);
LevelStack make_stack(const ExperimentConfig& config, const MultiScaleEnv& env);

/// Evaluation stream for `seed`, shared by training runs and `eval`.
Rng evaluation_rng(std::uint64_t seed);

/// Re-evaluates a policy directory written by a training run (the MSBL
/// policy of a single-point config) exactly as the run evaluated it.
InferenceResult evaluate_saved_policy(const ExperimentConfig& config, const std::string& policy_dir,
                                      std::uint64_t seed);

}  // namespace msbl

#endif  // MSBL_EXPERIMENT_HPP_
