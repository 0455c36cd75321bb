#include "msbl/policies.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace msbl {

Vector softmax(const Vector& scores, double beta) {
  if (!scores.allFinite()) throw Error("softmax: non-finite score");
  Vector z = beta * scores;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

Vector argmax_distribution(const Vector& scores) {
  if (!scores.allFinite()) throw Error("argmax: non-finite score");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i)
    if (scores(i) > scores(best)) best = i;
  Vector p = Vector::Zero(scores.size());
  p(best) = 1.0;
  return p;
}

double entropy(const Vector& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

std::string MacroAction::label() const {
  std::ostringstream s;
  if (auto t = std::get_if<TemperatureMod>(&kind)) {
    s << "temp=" << t->temperature;
  } else if (auto b = std::get_if<BoostMod>(&kind)) {
    s << "boost=" << b->boost << "@{";
    for (std::size_t i = 0; i < b->targets.size(); ++i) s << (i ? " " : "") << b->targets[i];
    s << "}";
  } else {
    const auto& w = std::get<FeedbackWeights>(kind).weights;
    s << "w=[";
    for (Eigen::Index i = 0; i < w.size(); ++i) s << (i ? " " : "") << w(i);
    s << "]";
  }
  return s.str();
}

MacroAction MacroAction::temperature(double tau, int index) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw Error("temperature must be finite and >= 0");
  return {TemperatureMod{tau}, index};
}

MacroAction MacroAction::boost(double delta, std::vector<int> targets, int index) {
  if (targets.empty()) throw Error("boost target set must be non-empty");
  return {BoostMod{delta, std::move(targets)}, index};
}

MacroAction MacroAction::feedback(Vector weights, int index) {
  if ((weights.array() < 0.0).any()) throw Error("feedback weights must be >= 0");
  return {FeedbackWeights{std::move(weights)}, index};
}

SoftmaxPolicy::SoftmaxPolicy(NetworkSpec spec, Vector theta, double beta, int conditional_dim)
    : spec_(std::move(spec)),
      theta_(std::make_shared<const Vector>(std::move(theta))),
      beta_(beta),
      conditional_dim_(conditional_dim) {
  spec_.validate();
  if (!(beta_ > 0.0)) throw Error("inverse temperature must be > 0");
  if (theta_->size() != spec_.parameter_count()) throw Error("policy: parameter count mismatch");
  if (conditional_dim_ < 0 || conditional_dim_ > spec_.input_dim)
    throw Error("policy: bad conditional dimension");
}

SoftmaxPolicy SoftmaxPolicy::zeros(NetworkSpec spec, double beta, int conditional_dim) {
  const auto n = spec.parameter_count();
  return SoftmaxPolicy(std::move(spec), Vector::Zero(n), beta, conditional_dim);
}

std::string SoftmaxPolicy::id() const {
  std::ostringstream s;
  s << "softmax(" << spec_.descriptor() << ",beta=" << beta_ << (conditional() ? ",conditional" : "") << ")";
  return s.str();
}

Vector SoftmaxPolicy::network_input(const Vector& features) const {
  if (features.size() == spec_.input_dim) return features;
  if (conditional() && conditioning_.size() == conditional_dim_ && features.size() == context_dim()) {
    Vector in(spec_.input_dim);
    in << features, conditioning_;
    return in;
  }
  throw Error("policy: feature length " + std::to_string(features.size()) + " does not match input dim " +
              std::to_string(spec_.input_dim));
}

Vector SoftmaxPolicy::logits(const Vector& features) const {
  Vector out = forward<double>(spec_, *theta_, network_input(features));
  if (!out.allFinite()) throw Error("policy: non-finite score");
  return out;
}

Vector SoftmaxPolicy::scores(const Vector& features) const {
  Vector s = logits(features);
  if (boost_.size() == s.size()) s += boost_;
  if (!greedy_) s *= inv_temperature_;
  return s;
}

Vector SoftmaxPolicy::action_distribution(const Vector& features) const {
  const Vector s = scores(features);
  return greedy_ ? argmax_distribution(s) : softmax(s, beta_);
}

std::pair<int, double> SoftmaxPolicy::sample_action(const Vector& features, Rng& rng) const {
  return sample_from(*this, features, rng);
}

Vector SoftmaxPolicy::log_prob_gradient(const Vector& features, int action) const {
  if (greedy_) throw Error("log-probability gradient undefined for a greedy policy");
  if (action < 0 || action >= action_count()) throw Error("action out of range");
  const Vector probs = action_distribution(features);
  Vector upstream = -probs;
  upstream(action) += 1.0;
  upstream *= beta_ * inv_temperature_;
  return backward<double>(spec_, *theta_, network_input(features), upstream);
}

SoftmaxPolicy SoftmaxPolicy::conditioned_on(const Vector& weights) const {
  if (!conditional()) throw Error("policy is not conditional");
  if (weights.size() != conditional_dim_)
    throw Error("weight vector length " + std::to_string(weights.size()) + " != " + std::to_string(conditional_dim_));
  SoftmaxPolicy out = *this;
  out.conditioning_ = weights;
  return out;
}

SoftmaxPolicy SoftmaxPolicy::with_parameters(Vector theta) const {
  if (theta.size() != theta_->size()) throw Error("policy: parameter count mismatch");
  SoftmaxPolicy out = *this;
  out.theta_ = std::make_shared<const Vector>(std::move(theta));
  return out;
}

SoftmaxPolicy apply_policy_modification(const SoftmaxPolicy& base, const MacroAction& m) {
  SoftmaxPolicy out = base;
  if (auto t = std::get_if<TemperatureMod>(&m.kind)) {
    if (t->temperature < 0.0 || !std::isfinite(t->temperature)) throw Error("temperature must be >= 0");
    if (t->temperature == 0.0)
      out.greedy_ = true;
    else
      out.inv_temperature_ /= std::max(t->temperature, kMinTemperature);
  } else if (auto b = std::get_if<BoostMod>(&m.kind)) {
    if (b->targets.empty()) throw Error("boost target set must be non-empty");
    if (out.boost_.size() != base.action_count()) out.boost_ = Vector::Zero(base.action_count());
    for (int a : b->targets) {
      if (a < 0 || a >= base.action_count()) throw Error("boost target out of range");
      out.boost_(a) += b->boost;
    }
  } else {
    throw Error("feedback weights are not a policy modification");
  }
  return out;
}

PolicyFamily::PolicyFamily(std::shared_ptr<const SoftmaxPolicy> base, std::vector<MacroAction> macro_actions,
                           FamilyMode mode)
    : base_(std::move(base)), macro_actions_(std::move(macro_actions)), mode_(mode) {
  if (!base_) throw Error("family: null base policy");
  if (macro_actions_.empty()) throw Error("family: empty macro action set");
  for (std::size_t i = 0; i < macro_actions_.size(); ++i) {
    const auto& m = macro_actions_[i];
    if (mode_ == FamilyMode::PolicyModification && !m.is_policy_modification())
      throw Error("family: feedback weights in a policy-modification family");
    if (mode_ == FamilyMode::FeedbackModification) {
      if (m.is_policy_modification()) throw Error("family: modification in a feedback-modification family");
      if (!base_->conditional()) throw Error("family: feedback modification needs a conditional base policy");
      if (std::get<FeedbackWeights>(m.kind).weights.size() != base_->conditional_dim())
        throw Error("family: weight vector length mismatch");
    }
  }
}

SoftmaxPolicy PolicyFamily::member(int index) const {
  if (index < 0 || index >= size()) throw Error("family: macro action index out of range");
  const auto& m = macro_actions_[static_cast<std::size_t>(index)];
  if (mode_ == FamilyMode::PolicyModification) return apply_policy_modification(*base_, m);
  return base_->conditioned_on(std::get<FeedbackWeights>(m.kind).weights);
}

Vector conditional_distribution(const PolicyFamily& family, const Vector& features, const MacroAction& m) {
  if (family.mode() != FamilyMode::FeedbackModification) throw Error("family is not feedback-modification");
  const auto* w = std::get_if<FeedbackWeights>(&m.kind);
  if (w == nullptr) throw Error("macro action is not a feedback weight vector");
  return family.base().conditioned_on(w->weights).action_distribution(features);
}

UniformPolicy::UniformPolicy(int action_count) : n_(action_count) {
  if (n_ < 1) throw Error("uniform policy needs >= 1 action");
}

Vector UniformPolicy::action_distribution(const Vector&) const { return Vector::Constant(n_, 1.0 / n_); }

FixedActionPolicy::FixedActionPolicy(int action_count, int action) : n_(action_count), action_(action) {
  if (action_ < 0 || action_ >= n_) throw Error("fixed action out of range");
}

Vector FixedActionPolicy::action_distribution(const Vector&) const {
  Vector p = Vector::Zero(n_);
  p(action_) = 1.0;
  return p;
}

std::pair<int, double> sample_from(const StochasticPolicy& policy, const Vector& features, Rng& rng) {
  const Vector probs = policy.action_distribution(features);
  const auto a = rng.categorical(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())));
  return {static_cast<int>(a), probs(static_cast<Eigen::Index>(a))};
}

void write_policy(std::ostream& out, const SoftmaxPolicy& policy) {
  out << policy.action_count() << ',' << format_real(policy.beta()) << ',' << policy.conditional_dim() << ','
      << policy.spec().descriptor() << '\n';
  const Vector& theta = policy.parameters();
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << (i ? "," : "") << format_real(theta(i));
  out << '\n';
}

SoftmaxPolicy read_policy(std::istream& in) {
  std::string header, params;
  if (!std::getline(in, header) || !std::getline(in, params)) throw Error("policy file truncated");
  std::vector<std::string> cells;
  {
    std::istringstream s(header);
    std::string c;
    while (std::getline(s, c, ',')) cells.push_back(c);
  }
  if (cells.size() != 4) throw Error("policy header needs 4 fields");
  NetworkSpec spec = NetworkSpec::from_descriptor(cells[3]);
  if (std::stoi(cells[0]) != spec.output_dim) throw Error("policy header: action count disagrees with descriptor");
  Vector theta(spec.parameter_count());
  std::istringstream s(params);
  std::string c;
  Eigen::Index i = 0;
  while (std::getline(s, c, ',')) {
    if (i >= theta.size()) throw Error("policy file: too many parameters");
    theta(i++) = parse_real(c);
  }
  if (i != theta.size()) throw Error("policy file: too few parameters");
  return SoftmaxPolicy(std::move(spec), std::move(theta), parse_real(cells[1]), std::stoi(cells[2]));
}

void save_policy(const std::string& path, const SoftmaxPolicy& policy) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  write_policy(out, policy);
}

SoftmaxPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_policy(in);
}

}  // namespace msbl
