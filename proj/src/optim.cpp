#include "msbl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "msbl/estimators.hpp"

namespace msbl {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (weight_decay < 0.0) throw Error("weight_decay must be >= 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw Error("moment constants must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw Error("epsilon must be > 0");
}

AdamW::AdamW(const OptimizerConfig& config, Eigen::Index size)
    : config_(config), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void AdamW::step(Vector& theta, const Vector& gradient) {
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * gradient;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  theta -= config_.learning_rate * config_.weight_decay * theta;
  theta.array() += config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

namespace {

struct Example {
  Vector input;
  int action;
  double reward;
  double propensity;
};

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

Vector batch_gradient(const SoftmaxPolicy& policy, std::span<const Example> batch) {
  std::vector<Vector> terms;
  terms.reserve(batch.size());
  for (const auto& ex : batch) {
    const Vector probs = policy.action_distribution(ex.input);
    const double w = probs(ex.action) / std::max(ex.propensity, kPropensityFloor) * ex.reward;
    if (w == 0.0)
      terms.push_back(Vector::Zero(policy.parameters().size()));
    else
      terms.push_back(w * policy.log_prob_gradient(ex.input, ex.action));
  }
  return pairwise_sum(terms) / static_cast<double>(batch.size());
}

LoggedDataset scalarized(const LoggedDataset& data, const Vector& w) {
  LoggedDataset out = data;
  for (auto& it : out.interactions) {
    it.context.features = concat(it.context.features, w);
    it.reward = w.dot(it.reward_components);
  }
  return out;
}

}  // namespace

double training_objective(const SoftmaxPolicy& policy, const LoggedDataset& data, const TrainingMode& mode) {
  if (std::holds_alternative<PlainMode>(mode)) return ips_value(policy, data).value;
  const auto& cm = std::get<ConditionalMode>(mode);
  std::vector<double> values;
  for (const auto& w : cm.weight_set) values.push_back(ips_value(policy, scalarized(data, w)).value);
  return pairwise_sum(values) / static_cast<double>(values.size());
}

SoftmaxPolicy train_policy(const LoggedDataset& data, const NetworkSpec& architecture, double beta,
                           const OptimizerConfig& opt, const TrainingMode& mode, Rng& rng, TrainingTrace* trace) {
  opt.validate();
  if (data.empty()) throw Error("train_policy: empty dataset");
  const auto* cm = std::get_if<ConditionalMode>(&mode);
  const int weight_dim = cm ? cm->weight_dim() : 0;
  if (cm) {
    if (cm->weight_set.empty()) throw Error("train_policy: empty macro weight set");
    if (data.component_count() != weight_dim)
      throw Error("train_policy: dataset has " + std::to_string(data.component_count()) +
                  " reward components, weight vectors have " + std::to_string(weight_dim));
  }

  NetworkSpec spec = architecture;
  spec.input_dim = data.context_dim + weight_dim;
  spec.output_dim = data.action_count;
  Rng init_rng = rng.substream("init");
  Rng shuffle_rng = rng.substream("shuffle");
  Rng weight_rng = rng.substream("weights");
  SoftmaxPolicy policy(spec, init_parameters(spec, init_rng), beta, weight_dim);
  if (trace) *trace = {};
  if (data.action_count == 1) return policy;

  Vector theta = policy.parameters();
  Vector best_theta = theta;
  double best_objective = -std::numeric_limits<double>::infinity();
  AdamW adam(opt, theta.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> examples(data.size());

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& it = data.interactions[order[i]];
      auto& ex = examples[i];
      ex.action = it.action_index;
      ex.propensity = it.propensity;
      if (cm) {
        const Vector& w = cm->weight_set[weight_rng.below(cm->weight_set.size())];
        ex.input = concat(it.context.features, w);
        ex.reward = w.dot(it.reward_components);
      } else {
        ex.input = it.context.features;
        ex.reward = it.reward;
      }
    }
    for (std::size_t start = 0; start < examples.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(opt.batch_size), examples.size() - start);
      const SoftmaxPolicy current = policy.with_parameters(theta);
      const Vector g = batch_gradient(current, std::span<const Example>(examples).subspan(start, len));
      if (!g.allFinite()) {
        std::ostringstream msg;
        msg << "train_policy: non-finite gradient at epoch " << epoch << ", batch starting " << start;
        throw Error(msg.str());
      }
      adam.step(theta, g);
    }
    const double objective = training_objective(policy.with_parameters(theta), data, mode);
    if (!std::isfinite(objective)) throw Error("train_policy: NaN objective at epoch " + std::to_string(epoch));
    if (trace) trace->objective.push_back(objective);
    if (objective > best_objective) {
      best_objective = objective;
      best_theta = theta;
      if (trace) trace->best_epoch = epoch;
    }
  }
  return policy.with_parameters(std::move(best_theta));
}

double finite_difference_check(const Vector& theta, const std::function<double(const Vector&)>& objective,
                               const Vector& analytic, double eps, Rng& rng, int min_coords) {
  if (analytic.size() != theta.size()) throw Error("finite_difference_check: gradient size mismatch");
  std::vector<Eigen::Index> coords(static_cast<std::size_t>(theta.size()));
  std::iota(coords.begin(), coords.end(), Eigen::Index{0});
  for (std::size_t i = coords.size(); i > 1; --i) std::swap(coords[i - 1], coords[rng.below(i)]);
  if (static_cast<std::size_t>(min_coords) < coords.size()) coords.resize(static_cast<std::size_t>(min_coords));
  double worst = 0.0;
  Vector probe = theta;
  for (Eigen::Index c : coords) {
    probe(c) = theta(c) + eps;
    const double up = objective(probe);
    probe(c) = theta(c) - eps;
    const double down = objective(probe);
    probe(c) = theta(c);
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max({std::abs(numeric), std::abs(analytic(c)), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic(c)) / scale);
  }
  return worst;
}

}  // namespace msbl
