#ifndef MSBL_OPTIM_HPP_
#define MSBL_OPTIM_HPP_

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "msbl/core.hpp"
#include "msbl/network.hpp"
#include "msbl/policies.hpp"
#include "msbl/rng.hpp"

namespace msbl {

/// Adaptive-moment gradient ascent with decoupled weight decay.
struct OptimizerConfig {
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  int batch_size = 256;
  int epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

class AdamW {
 public:
  AdamW(const OptimizerConfig& config, Eigen::Index size);
  /// One ascent step along `gradient`.
  void step(Vector& theta, const Vector& gradient);

 private:
  OptimizerConfig config_;
  Vector m_, v_;
  long t_ = 0;
};

struct PlainMode {};

/// Feedback modification: one policy conditioned on a macro weight vector,
/// trained on the scalarized reward w . reward_components.
struct ConditionalMode {
  std::vector<Vector> weight_set;
  int weight_dim() const { return weight_set.empty() ? 0 : static_cast<int>(weight_set.front().size()); }
};

using TrainingMode = std::variant<PlainMode, ConditionalMode>;

struct TrainingTrace {
  /// Epoch-end IPS objective on the training data.
  std::vector<double> objective;
  int best_epoch = -1;
};

/// Maximizes the IPS value of a softmax policy on `data` and returns the
/// parameters with the best epoch-end training objective. `rng` drives
/// initialization, shuffling, and weight sampling.
SoftmaxPolicy train_policy(const LoggedDataset& data, const NetworkSpec& hidden, double beta,
                           const OptimizerConfig& opt, const TrainingMode& mode, Rng& rng,
                           TrainingTrace* trace = nullptr);

/// Epoch-end objective used by train_policy: plain IPS, or for conditional
/// policies the mean over the weight set of the scalarized IPS value.
double training_objective(const SoftmaxPolicy& policy, const LoggedDataset& data, const TrainingMode& mode);

/// Largest coordinate-wise relative error between `analytic` and central
/// differences of `objective`, over a random subset of at least
/// `min_coords` coordinates (all when fewer exist).
double finite_difference_check(const Vector& theta, const std::function<double(const Vector&)>& objective,
                               const Vector& analytic, double eps, Rng& rng, int min_coords = 50);

}  // namespace msbl

#endif  // MSBL_OPTIM_HPP_
