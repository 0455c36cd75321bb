#include "msbl/core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace msbl {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

long parse_int(const std::string& s) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw Error("bad integer field '" + s + "'");
  return v;
}

}  // namespace

void check_level_stack(const std::vector<LevelSpec>& levels) {
  if (levels.empty()) throw Error("empty level stack");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    if (l.level_index != static_cast<int>(i) + 1)
      throw Error("level indices must be consecutive starting at 1");
    if (l.action_count < 1) throw Error("level " + std::to_string(l.level_index) + ": action_count < 1");
    if (l.timescale_ratio < 1) throw Error("level " + std::to_string(l.level_index) + ": timescale < 1");
    if (l.context_dim < 0) throw Error("negative context_dim");
  }
  if (levels.front().timescale_ratio != 1) throw Error("level 1 timescale ratio must be 1");
}

int LoggedDataset::component_count() const {
  return interactions.empty() ? 0 : static_cast<int>(interactions.front().reward_components.size());
}

ValidationReport validate_dataset(const LoggedDataset& data, const StochasticPolicy* logging_policy) {
  ValidationReport report;
  for (std::size_t i = 0; i < data.interactions.size(); ++i) {
    const auto& it = data.interactions[i];
    if (it.context.level_index != data.level_index)
      report.violations.push_back({i, "level index differs from dataset level"});
    if (!(it.propensity > 0.0))
      report.violations.push_back({i, "propensity <= 0"});
    else if (it.propensity > 1.0)
      report.violations.push_back({i, "propensity > 1"});
    if (!std::isfinite(it.reward) || !it.reward_components.allFinite())
      report.violations.push_back({i, "non-finite reward"});
    if (it.action_index < 0 || it.action_index >= data.action_count) {
      report.violations.push_back({i, "action index out of range"});
      continue;
    }
    if (logging_policy != nullptr) {
      const Vector probs = logging_policy->action_distribution(it.context.features);
      const double expected = probs(it.action_index);
      if (std::abs(expected - it.propensity) > 1e-9) {
        std::ostringstream msg;
        msg << "propensity " << it.propensity << " != logging probability " << expected;
        report.violations.push_back({i, msg.str()});
      }
    }
  }
  return report;
}

std::string format_real(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  if (ec != std::errc()) throw Error("format_real failed");
  return std::string(buf, p);
}

double parse_real(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw Error("bad real field '" + s + "'");
  return v;
}

void write_dataset(std::ostream& out, const LoggedDataset& data) {
  out << data.level_index << ',' << data.size() << ',' << data.context_dim << ','
      << data.action_count << ',' << data.logging_policy_id << '\n';
  for (const auto& it : data.interactions) {
    for (Eigen::Index j = 0; j < it.context.features.size(); ++j) out << format_real(it.context.features(j)) << ',';
    out << it.action_index << ',' << format_real(it.reward) << ',' << format_real(it.propensity);
    for (Eigen::Index j = 0; j < it.reward_components.size(); ++j) out << ',' << format_real(it.reward_components(j));
    out << '\n';
  }
}

LoggedDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset: missing header");
  const auto head = split_csv(line);
  if (head.size() != 5) throw Error("dataset: header needs 5 fields");
  LoggedDataset data;
  data.level_index = static_cast<int>(parse_int(head[0]));
  const long n = parse_int(head[1]);
  data.context_dim = static_cast<int>(parse_int(head[2]));
  data.action_count = static_cast<int>(parse_int(head[3]));
  data.logging_policy_id = head[4];
  const std::size_t d = static_cast<std::size_t>(data.context_dim);
  data.interactions.reserve(static_cast<std::size_t>(n));
  for (long row = 0; row < n; ++row) {
    if (!std::getline(in, line)) throw Error("dataset: expected " + std::to_string(n) + " rows");
    const auto cells = split_csv(line);
    if (cells.size() < d + 3) throw Error("dataset: short row " + std::to_string(row));
    LoggedInteraction it;
    it.context.level_index = data.level_index;
    it.context.features.resize(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) it.context.features(static_cast<Eigen::Index>(j)) = parse_real(cells[j]);
    it.action_index = static_cast<int>(parse_int(cells[d]));
    it.reward = parse_real(cells[d + 1]);
    it.propensity = parse_real(cells[d + 2]);
    const std::size_t m = cells.size() - d - 3;
    it.reward_components.resize(static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j) it.reward_components(static_cast<Eigen::Index>(j)) = parse_real(cells[d + 3 + j]);
    data.interactions.push_back(std::move(it));
  }
  return data;
}

void save_dataset(const std::string& path, const LoggedDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  write_dataset(out, data);
}

LoggedDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_dataset(in);
}

}  // namespace msbl
