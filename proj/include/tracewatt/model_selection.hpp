#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tracewatt/gbdt.hpp"

namespace tracewatt {

class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FoldPlan {
  std::vector<int> assignments;  // per-row fold index in [0, k)
  int k = 5;
  std::uint64_t seed = 0;
};

// Within each class, rows are shuffled by seed and dealt round-robin, so
// per-fold class counts differ by at most one.
FoldPlan stratified_folds(const std::vector<int>& labels, int k,
                          std::uint64_t seed);

// Mann-Whitney AUC with midranks for ties.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

// Appendix ranges for the randomized search.
struct SearchSpace {
  int max_depth_lo = 3, max_depth_hi = 7;
  double learning_rate_lo = 0.005, learning_rate_hi = 0.2;  // log-uniform
  int min_child_weight_lo = 1, min_child_weight_hi = 7;
  double subsample_lo = 0.3, subsample_hi = 0.7;
  double colsample_lo = 0.3, colsample_hi = 0.7;
  double gamma_lo = 0.0, gamma_hi = 5.0;
};

HyperParams sample_params(const SearchSpace& space, std::uint64_t seed,
                          int candidate_index);

struct HalvingConfig {
  int n_candidates = 16;
  int min_rounds = 10;
  int factor = 3;
  int max_rounds = 270;
};

struct HalvingResult {
  HyperParams best;
  int rounds = 0;  // resource budget of the top rung
  std::vector<int> rung_rounds;
  // surviving candidate indices entering each rung, in score order
  std::vector<std::vector<int>> rung_survivors;
};

// Successive halving over randomized candidates; the resource is boosting
// rounds. Every rung scores survivors by mean AUC under inner_k-fold
// stratified CV; ties break by earlier sampling order.
HalvingResult halving_search(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                             const SearchSpace& space, int inner_k,
                             std::uint64_t seed, const HalvingConfig& config);

struct OuterFoldResult {
  int fold = 0;
  double auc = 0.0;
  HyperParams best_params;
  int rounds_used = 0;
  std::vector<int> train_rows;  // kept for out-of-fold leak audits
};

struct CVReport {
  std::vector<OuterFoldResult> per_outer_fold;
  double mean_auc = 0.0;
  double ci95_halfwidth = 0.0;  // 1.96 * sd / sqrt(k), normal approximation
  std::vector<double> oof_scores;  // one held-out score per row
  std::vector<int> oof_fold;       // which outer fold scored the row
};

struct NestedCVResult {
  CVReport report;
  std::vector<BoostedModel> fold_models;
};

// Outer folds estimate generalization; halving_search runs only on each
// outer-train portion. threads > 1 evaluates outer folds concurrently;
// every unit derives its own seed so scheduling cannot change results.
NestedCVResult nested_cv(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                         int outer_k, int inner_k, std::uint64_t seed,
                         const SearchSpace& space, const HalvingConfig& config,
                         int threads = 1);

struct FinalModel {
  BoostedModel model;
  HalvingResult search;
};

FinalModel train_final(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                       int inner_k, std::uint64_t seed, const SearchSpace& space,
                       const HalvingConfig& config,
                       std::vector<std::string> feature_names = {});

}  // namespace tracewatt
