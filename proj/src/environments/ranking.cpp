#include "msbl/environments/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace msbl {

void RankEnvSpec::validate() const {
  if (groups < 2) throw Error("ranking: need at least two groups");
  if (items_per_group < 1 || horizon < 1) throw Error("ranking: bad sizes");
  if (k < 1 || k > item_count()) throw Error("ranking: k must lie in [1, item count]");
  if (preferred < 0.0 || preferred > 1.0 || other < 0.0 || other > 1.0) throw Error("ranking: preference outside [0, 1]");
  if (!(sigma_s >= 0.0) || !(context_noise >= 0.0)) throw Error("ranking: noise must be >= 0");
  if (!(score_lo >= 0.0 && score_lo <= score_hi && score_hi <= 1.0)) throw Error("ranking: scores must lie in [0, 1]");
  if (!(return_floor > 0.0 && return_floor <= 1.0)) throw Error("ranking: return floor must lie in (0, 1]");
}

RankStepResult rank_step(const Vector& scores, const std::vector<int>& item_group, const BoostMod& boost, int k,
                         double sigma_s, Rng& rng) {
  const auto n = static_cast<int>(scores.size());
  if (static_cast<int>(item_group.size()) != n) throw Error("rank_step: item group table size");
  if (k < 1 || k > n) throw Error("rank_step: k exceeds item count");
  Vector noisy = scores;
  if (sigma_s > 0.0)
    for (int i = 0; i < n; ++i) noisy(i) += sigma_s * rng.normal();
  for (int i = 0; i < n; ++i)
    if (std::find(boost.targets.begin(), boost.targets.end(), item_group[static_cast<std::size_t>(i)]) !=
        boost.targets.end())
      noisy(i) += boost.boost;
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return noisy(a) > noisy(b); });
  RankStepResult out;
  out.selection.assign(idx.begin(), idx.begin() + k);
  for (int i : out.selection) out.clicks.push_back(rng.bernoulli(std::clamp(scores(i), 0.0, 1.0)) ? 1 : 0);
  return out;
}

double retention_weight(const std::vector<int>& group_counts, const std::vector<double>& preferences) {
  if (group_counts.size() != preferences.size()) throw Error("retention: count/preference size mismatch");
  double total = 0.0, w = 0.0;
  for (std::size_t i = 0; i < group_counts.size(); ++i) {
    if (group_counts[i] < 0) throw Error("retention: negative count");
    total += group_counts[i];
    w += preferences[i] * group_counts[i];
  }
  if (total == 0.0) throw Error("retention: no items selected");
  return w / total;
}

Retention retention_reward(const std::vector<int>& group_counts, const std::vector<double>& preferences, Rng& rng,
                           double floor) {
  Retention r;
  r.return_probability = std::max(retention_weight(group_counts, preferences), floor);
  r.return_day = static_cast<int>(rng.geometric(r.return_probability));
  r.reward = 1.0 / r.return_day;
  return r;
}

double expected_inverse_return_day(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error("expected return: p must lie in (0, 1]");
  if (p == 1.0) return 1.0;
  return -p * std::log(p) / (1.0 - p);
}

RankEnv::RankEnv(RankEnvSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (int i = 0; i < spec_.item_count(); ++i) item_group_.push_back(i / spec_.items_per_group);
  Rng base = Rng(spec_.construction_seed).substream("ranking-scores");
  for (int u = 0; u < spec_.groups; ++u) {
    Rng r = base.substream(static_cast<std::uint64_t>(u));
    Vector s(spec_.item_count());
    for (int i = 0; i < spec_.item_count(); ++i) s(i) = r.uniform(spec_.score_lo, spec_.score_hi);
    scores_.push_back(std::move(s));
  }
}

std::vector<LevelSpec> RankEnv::levels() const {
  return {{1, 1, spec_.item_count(), spec_.groups}, {2, spec_.horizon, spec_.groups, spec_.groups}};
}

std::vector<double> RankEnv::preferences(int user_group) const {
  std::vector<double> p(static_cast<std::size_t>(spec_.groups), spec_.other);
  p.at(static_cast<std::size_t>(user_group)) = spec_.preferred;
  return p;
}

std::vector<MacroAction> RankEnv::boost_actions() const {
  std::vector<MacroAction> out;
  for (int g = 0; g < spec_.groups; ++g) out.push_back(MacroAction::boost(spec_.boost, {g}, g));
  return out;
}

ContextSample RankEnv::sample_context(int level, Rng& rng, std::optional<int> group) const {
  if (level < 1 || level > 2) throw Error("ranking: no level " + std::to_string(level));
  const int u = group ? *group : static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.groups)));
  if (u < 0 || u >= spec_.groups) throw Error("ranking: user group out of range");
  ContextSample x;
  x.level_index = level;
  x.group_id = u;
  x.features = Vector::Zero(spec_.groups);
  x.features(u) = 1.0;
  if (spec_.context_noise > 0.0)
    for (int i = 0; i < spec_.groups; ++i) x.features(i) += spec_.context_noise * rng.normal();
  return x;
}

StepOutcome RankEnv::step(int level, const ContextSample& x, int action, std::span<const int> upper, LowerController&,
                          Rng& rng) const {
  if (!x.group_id) throw Error("ranking: context without ground truth");
  const int u = *x.group_id;
  const int boost_group = level == 1 ? (upper.empty() ? -1 : upper[0]) : action;
  if (level < 1 || level > 2) throw Error("ranking: no level " + std::to_string(level));
  if (boost_group >= spec_.groups) throw Error("ranking: boost group out of range");
  BoostMod boost;
  if (boost_group >= 0) boost = BoostMod{spec_.boost, {boost_group}};
  const int steps = level == 1 ? 1 : spec_.horizon;
  std::vector<int> counts(static_cast<std::size_t>(spec_.groups), 0);
  double clicks = 0.0;
  for (int t = 0; t < steps; ++t) {
    const RankStepResult r = rank_step(base_scores(u), item_group_, boost, spec_.k, spec_.sigma_s, rng);
    for (int i : r.selection) ++counts[static_cast<std::size_t>(item_group_[static_cast<std::size_t>(i)])];
    clicks += std::accumulate(r.clicks.begin(), r.clicks.end(), 0);
  }
  const double r1 = clicks / (static_cast<double>(steps) * spec_.k);
  StepOutcome out;
  if (level == 1) {
    out.reward = r1;
    out.level_means = {r1};
    return out;
  }
  out.reward = retention_reward(counts, preferences(u), rng, spec_.return_floor).reward;
  out.level_means = {r1, out.reward};
  return out;
}

void RankEnv::dump_ground_truth(std::ostream& out) const {
  out << "user_group,item,item_group,score,preference\n";
  for (int u = 0; u < spec_.groups; ++u) {
    const auto p = preferences(u);
    for (int i = 0; i < spec_.item_count(); ++i)
      out << u << ',' << i << ',' << item_group_[static_cast<std::size_t>(i)] << ',' << format_real(base_scores(u)(i))
          << ',' << format_real(p[static_cast<std::size_t>(item_group_[static_cast<std::size_t>(i)])]) << '\n';
  }
}

}  // namespace msbl
