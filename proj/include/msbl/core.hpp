#ifndef MSBL_CORE_HPP_
#define MSBL_CORE_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace msbl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Smallest propensity accepted as a denominator.
inline constexpr double kPropensityFloor = 1e-12;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Static description of one level of a multi-scale problem.
struct LevelSpec {
  int level_index = 1;
  /// Number of level-(k-1) steps per level-k step; 1 at the bottom level.
  int timescale_ratio = 1;
  int action_count = 1;
  int context_dim = 0;
};

/// Throws unless `levels` is a consecutive, bottom-up stack starting at 1.
void check_level_stack(const std::vector<LevelSpec>& levels);

struct ContextSample {
  int level_index = 1;
  Vector features;
  /// Simulator-internal ground truth; policies never read it.
  std::optional<int> group_id;
};

struct LoggedInteraction {
  ContextSample context;
  int action_index = 0;
  double reward = 0.0;
  double propensity = 1.0;
  /// Vector feedback for feedback modification; empty otherwise.
  Vector reward_components;
};

struct LoggedDataset {
  int level_index = 1;
  int context_dim = 0;
  int action_count = 1;
  std::string logging_policy_id = "uniform";
  std::vector<LoggedInteraction> interactions;

  std::size_t size() const { return interactions.size(); }
  bool empty() const { return interactions.empty(); }
  /// Length of reward_components, or 0 when absent.
  int component_count() const;
};

/// Anything that maps a feature vector to a distribution over actions.
class StochasticPolicy {
 public:
  virtual ~StochasticPolicy() = default;
  virtual int action_count() const = 0;
  virtual Vector action_distribution(const Vector& features) const = 0;
  virtual std::string id() const = 0;
};

struct Violation {
  std::size_t row;
  std::string what;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks propensities lie in (0, 1], actions are in range and, when a
/// logging policy is supplied, that logged propensities agree with it to 1e-9.
ValidationReport validate_dataset(const LoggedDataset& data,
                                  const StochasticPolicy* logging_policy = nullptr);

/// CSV with a `level,n,context_dim,action_count,logging_policy_id` header line.
void write_dataset(std::ostream& out, const LoggedDataset& data);
LoggedDataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const LoggedDataset& data);
LoggedDataset load_dataset(const std::string& path);

/// Formats a real with 17 significant digits ('.' decimal separator).
std::string format_real(double x);
double parse_real(const std::string& s);

}  // namespace msbl

#endif  // MSBL_CORE_HPP_
