#include "msbl/environments/toy.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace msbl {

std::vector<std::vector<int>> k_subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> cur(static_cast<std::size_t>(k));
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

double toy_long_term_reward(const std::vector<std::vector<int>>& trajectory, int preferred, int horizon) {
  if (static_cast<int>(trajectory.size()) != horizon)
    throw Error("toy reward: trajectory has " + std::to_string(trajectory.size()) + " steps, expected " +
                std::to_string(horizon));
  int hits = 0;
  for (const auto& sel : trajectory)
    if (std::find(sel.begin(), sel.end(), preferred) != sel.end()) ++hits;
  return static_cast<double>(hits) / horizon;
}

void ToyEnvSpec::validate() const {
  if (n_items < 3 || k < 1 || k + 2 > n_items) throw Error("toy: need k + 2 <= n_items");
  if (context_count < 1 || horizon < 1 || boost_levels < 2) throw Error("toy: bad sizes");
  if (static_cast<int>(target_level.size()) != context_count) throw Error("toy: one target level per context");
  for (int t : target_level)
    if (t < 1 || t >= boost_levels) throw Error("toy: target level must be a positive boost");
}

ToyEnv::ToyEnv(ToyEnvSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  subsets_ = k_subsets(spec_.n_items, spec_.k);
  const int n = spec_.n_items, k = spec_.k;
  const double step = boost_value(1);
  const double kth = 0.5;  // relevance of the weakest unboosted top-k item
  for (int c = 0; c < spec_.context_count; ++c) {
    const double target = boost_value(spec_.target_level[static_cast<std::size_t>(c)]);
    // Preferred item crosses the k-th item half a step before the target boost.
    const double pref = kth + 0.5 * step - target;
    if (pref <= 0.0) throw Error("toy: target boost too large for the relevance construction");
    const double top_floor = std::max(0.96, pref + spec_.max_boost + 0.01);
    if (top_floor + 0.008 * (k - 1) > 1.0) throw Error("toy: target boost too small for the relevance construction");
    // The overtaker passes the preferred item half a step after the target.
    const double slope = 1.0 + pref / (target + 0.5 * step);
    std::vector<double> rel_by_role, dir_by_role;
    for (int i = 0; i < k - 1; ++i) {
      rel_by_role.push_back(top_floor + 0.008 * (k - 2 - i));
      dir_by_role.push_back(0.0);
    }
    rel_by_role.push_back(kth);
    dir_by_role.push_back(0.0);
    rel_by_role.push_back(pref);
    dir_by_role.push_back(1.0);
    rel_by_role.push_back(0.0);
    dir_by_role.push_back(slope);
    const int fillers = n - (k + 2);
    for (int i = 0; i < fillers; ++i) {
      rel_by_role.push_back(pref * (fillers - i) / (fillers + 1.0));
      dir_by_role.push_back(0.0);
    }
    Vector rel(n), dir(n);
    const int shift = c * (n / spec_.context_count);
    for (int r = 0; r < n; ++r) {
      const int item = (r + shift) % n;
      rel(item) = rel_by_role[static_cast<std::size_t>(r)];
      dir(item) = dir_by_role[static_cast<std::size_t>(r)];
    }
    relevance_.push_back(rel);
    direction_.push_back(dir);
    preferred_.push_back((k + shift) % n);
  }
  for (int c = 0; c < spec_.context_count; ++c)
    for (int b = 0; b < spec_.boost_levels; ++b)
      if ((macro_reward(c, b) == 1.0) != (b == spec_.target_level[static_cast<std::size_t>(c)]))
        throw Error("toy: relevance construction failed for context " + std::to_string(c));
}

std::vector<LevelSpec> ToyEnv::levels() const {
  return {{1, 1, micro_action_count(), spec_.context_count},
          {2, spec_.horizon, spec_.boost_levels, spec_.context_count}};
}

double ToyEnv::boost_value(int level) const {
  return spec_.max_boost * level / static_cast<double>(spec_.boost_levels - 1);
}

std::vector<MacroAction> ToyEnv::macro_actions() const {
  std::vector<MacroAction> out;
  for (int b = 0; b < spec_.boost_levels; ++b) {
    std::vector<int> all(static_cast<std::size_t>(spec_.n_items));
    std::iota(all.begin(), all.end(), 0);
    out.push_back(MacroAction::boost(boost_value(b), std::move(all), b));
  }
  return out;
}

int ToyEnv::subset_index(std::vector<int> items) const {
  std::sort(items.begin(), items.end());
  const auto it = std::lower_bound(subsets_.begin(), subsets_.end(), items);
  if (it == subsets_.end() || *it != items) throw Error("toy: not a k-subset");
  return static_cast<int>(it - subsets_.begin());
}

ContextSample ToyEnv::context(int c) const {
  ContextSample x;
  x.features = Vector::Zero(spec_.context_count);
  x.features(c) = 1.0;
  x.group_id = c;
  return x;
}

ContextSample ToyEnv::sample_context(int level, Rng& rng, std::optional<int> group) const {
  ContextSample x = context(group ? *group : static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.context_count))));
  x.level_index = level;
  return x;
}

std::vector<int> ToyEnv::micro_select(int context, int boost_level) const {
  const Vector s = relevance(context) + boost_value(boost_level) * boost_direction(context);
  std::vector<int> idx(static_cast<std::size_t>(spec_.n_items));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return s(a) > s(b); });
  idx.resize(static_cast<std::size_t>(spec_.k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

bool ToyEnv::contains_preferred(int context, int micro_action) const {
  const auto& sel = subset(micro_action);
  return std::find(sel.begin(), sel.end(), preferred_item(context)) != sel.end();
}

double ToyEnv::micro_reward(int context, int micro_action) const {
  double r = 0.0;
  for (int i : subset(micro_action)) r += relevance(context)(i);
  return r / spec_.k;
}

double ToyEnv::macro_reward(int context, int boost_level) const {
  std::vector<std::vector<int>> traj(static_cast<std::size_t>(spec_.horizon), micro_select(context, boost_level));
  return toy_long_term_reward(traj, preferred_item(context), spec_.horizon);
}

double ToyEnv::expected_macro_value(const StochasticPolicy& policy) const {
  double v = 0.0;
  for (int c = 0; c < spec_.context_count; ++c) {
    const Vector p = policy.action_distribution(context(c).features);
    for (int b = 0; b < spec_.boost_levels; ++b) v += p(b) * macro_reward(c, b);
  }
  return v / spec_.context_count;
}

StepOutcome ToyEnv::step(int level, const ContextSample& x, int action, std::span<const int>, LowerController&,
                         Rng&) const {
  if (!x.group_id) throw Error("toy: context without ground truth");
  const int c = *x.group_id;
  StepOutcome out;
  if (level == 1) {
    out.reward = micro_reward(c, action);
    out.level_means = {out.reward};
    return out;
  }
  if (level != 2) throw Error("toy: no level " + std::to_string(level));
  if (action < 0 || action >= spec_.boost_levels) throw Error("toy: boost level out of range");
  const std::vector<int> sel = micro_select(c, action);
  const double r1 = micro_reward(c, subset_index(sel));
  std::vector<std::vector<int>> traj(static_cast<std::size_t>(spec_.horizon), sel);
  out.reward = toy_long_term_reward(traj, preferred_item(c), spec_.horizon);
  out.level_means = {r1, out.reward};
  return out;
}

void ToyEnv::dump_ground_truth(std::ostream& out) const {
  out << "context,item,relevance,boost_direction,preferred\n";
  for (int c = 0; c < spec_.context_count; ++c)
    for (int i = 0; i < spec_.n_items; ++i)
      out << c << ',' << i << ',' << format_real(relevance(c)(i)) << ',' << format_real(boost_direction(c)(i)) << ','
          << (i == preferred_item(c) ? 1 : 0) << '\n';
}

}  // namespace msbl
