#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tracewatt/trace.hpp"

namespace tracewatt {

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatureConfig {
  int k = 10;                 // tail size per step
  int max_lcs_tokens = 4096;  // LCS window per side
  int step = 1;               // decision step s
};

// Missing slots (steps with fewer than k tokens) are NaN, never imputed;
// the tree learner's default-direction routing absorbs them.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// k smallest logprobs of the step, exponentiated, ascending; trailing NaN
// when the step has fewer than k tokens.
Eigen::VectorXd tail_probs(const Step& step, int k);

int token_count(const Step& step);

// Longest common subsequence over token surfaces (DP over the last
// max_lcs_tokens of each side), divided by the preceding step's window
// length. Empty prev gives 0.
double overlap_ratio(const std::vector<std::string>& prev,
                     const std::vector<std::string>& cur, int max_lcs_tokens);

// Layout for decision step s: [per step i in 1..s: k tail probs, token
// count] then [per i in 2..s: overlap(i-1, i)]. Length s*(k+1) + (s-1).
int feature_vector_length(int step, int k);

std::vector<std::string> feature_names(int step, int k);

// Reads only steps 1..s; throws FeatureError when the trajectory is shorter.
Eigen::VectorXd build_vector(const Trajectory& trajectory,
                             const FeatureConfig& config);

struct FeatureMatrix {
  Eigen::MatrixXd x;  // rows = eligible runs, NaN = missing
  Eigen::VectorXi y;
  std::vector<std::string> run_ids;        // row order, lexicographic
  std::vector<std::string> names;          // column names
  std::vector<std::string> ineligible;     // runs with fewer than s steps
  FeatureConfig config;
};

// Runs shorter than config.step are excluded (they finished before any
// decision could happen). Throws FeatureError when nothing is eligible.
FeatureMatrix build_matrix(const std::vector<Trajectory>& corpus,
                           const FeatureConfig& config);

}  // namespace tracewatt
