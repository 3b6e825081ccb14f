#include "tracewatt/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace tracewatt {

Eigen::VectorXd tail_probs(const Step& step, int k) {
  std::vector<double> lps;
  lps.reserve(step.tokens.size());
  for (const TokenEvent& t : step.tokens) lps.push_back(t.logprob);
  std::sort(lps.begin(), lps.end());

  Eigen::VectorXd out = Eigen::VectorXd::Constant(k, kMissing);
  const int n = std::min<int>(k, static_cast<int>(lps.size()));
  for (int i = 0; i < n; ++i) out[i] = std::exp(lps[static_cast<std::size_t>(i)]);
  return out;
}

int token_count(const Step& step) { return static_cast<int>(step.tokens.size()); }

double overlap_ratio(const std::vector<std::string>& prev,
                     const std::vector<std::string>& cur, int max_lcs_tokens) {
  const auto window = [max_lcs_tokens](const std::vector<std::string>& v) {
    const std::size_t n = std::min<std::size_t>(
        v.size(), static_cast<std::size_t>(max_lcs_tokens));
    return std::vector<std::string>(v.end() - static_cast<std::ptrdiff_t>(n), v.end());
  };
  const std::vector<std::string> a = window(prev);
  const std::vector<std::string> b = window(cur);
  if (a.empty()) return 0.0;
  if (b.empty()) return 0.0;

  // Two-row LCS DP.
  std::vector<int> prev_row(b.size() + 1, 0);
  std::vector<int> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      row[j] = a[i - 1] == b[j - 1] ? prev_row[j - 1] + 1
                                    : std::max(prev_row[j], row[j - 1]);
    }
    std::swap(prev_row, row);
  }
  return static_cast<double>(prev_row[b.size()]) / static_cast<double>(a.size());
}

int feature_vector_length(int step, int k) { return step * (k + 1) + (step - 1); }

std::vector<std::string> feature_names(int step, int k) {
  std::vector<std::string> names;
  char buf[32];
  for (int s = 1; s <= step; ++s) {
    for (int j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof(buf), "s%d_tail%02d", s, j);
      names.emplace_back(buf);
    }
    std::snprintf(buf, sizeof(buf), "s%d_tokens", s);
    names.emplace_back(buf);
  }
  for (int s = 2; s <= step; ++s) {
    std::snprintf(buf, sizeof(buf), "ov_%d_%d", s - 1, s);
    names.emplace_back(buf);
  }
  return names;
}

Eigen::VectorXd build_vector(const Trajectory& trajectory,
                             const FeatureConfig& config) {
  const int s = config.step;
  if (static_cast<int>(trajectory.steps.size()) < s)
    throw FeatureError("trajectory " + trajectory.run_id + " has fewer than " +
                       std::to_string(s) + " steps");

  Eigen::VectorXd v(feature_vector_length(s, config.k));
  int pos = 0;
  for (int i = 0; i < s; ++i) {
    v.segment(pos, config.k) = tail_probs(trajectory.steps[static_cast<std::size_t>(i)], config.k);
    pos += config.k;
    v[pos++] = static_cast<double>(token_count(trajectory.steps[static_cast<std::size_t>(i)]));
  }
  auto surfaces = [](const Step& step) {
    std::vector<std::string> out;
    out.reserve(step.tokens.size());
    for (const TokenEvent& t : step.tokens) out.push_back(t.text);
    return out;
  };
  for (int i = 1; i < s; ++i) {
    v[pos++] = overlap_ratio(surfaces(trajectory.steps[static_cast<std::size_t>(i) - 1]),
                             surfaces(trajectory.steps[static_cast<std::size_t>(i)]),
                             config.max_lcs_tokens);
  }
  return v;
}

FeatureMatrix build_matrix(const std::vector<Trajectory>& corpus,
                           const FeatureConfig& config) {
  // Row order is lexicographic run_id regardless of corpus order.
  std::map<std::string, const Trajectory*> by_id;
  for (const Trajectory& t : corpus) by_id[t.run_id] = &t;

  FeatureMatrix m;
  m.config = config;
  m.names = feature_names(config.step, config.k);
  std::vector<Eigen::VectorXd> rows;
  std::vector<int> labels;
  for (const auto& [id, traj] : by_id) {
    if (static_cast<int>(traj->steps.size()) < config.step) {
      m.ineligible.push_back(id);
      continue;
    }
    rows.push_back(build_vector(*traj, config));
    labels.push_back(traj->outcome);
    m.run_ids.push_back(id);
  }
  if (rows.empty()) throw FeatureError("zero eligible runs at step " +
                                       std::to_string(config.step));
  m.x.resize(static_cast<Eigen::Index>(rows.size()),
             feature_vector_length(config.step, config.k));
  m.y.resize(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.x.row(static_cast<Eigen::Index>(i)) = rows[i];
    m.y[static_cast<Eigen::Index>(i)] = labels[i];
  }
  return m;
}

}  // namespace tracewatt
