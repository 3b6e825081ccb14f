#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tracewatt {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HyperParams {
  int max_depth = 5;
  double learning_rate = 0.1;
  double min_child_weight = 1.0;
  double subsample = 1.0;
  double colsample = 1.0;
  double gamma = 0.0;  // min loss reduction to accept a split
  double l2_lambda = 1.0;
  int rounds = 100;
  double pos_weight = 1.0;
};

struct TreeNode {
  bool is_leaf = true;
  int feature_index = -1;
  double threshold = 0.0;
  bool default_left = true;  // routing for missing values
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaf margin contribution (learning rate applied)
  // training stats
  double gain = 0.0;
  double cover = 0.0;  // hessian sum of training rows reaching the node
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const Eigen::VectorXd& x) const;
};

struct BoostedModel {
  std::vector<Tree> trees;
  double base_margin = 0.0;
  HyperParams hyperparams;
  int feature_count = 0;
  std::vector<std::string> feature_names;
};

// Second-order logistic boosting with exact greedy splits. Labels must
// contain both classes. Deterministic for fixed (data, params, seed).
// Missing values (NaN) are routed to the gain-maximizing side, recorded as
// the node's default direction.
BoostedModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                 const HyperParams& params, std::uint64_t seed,
                 std::vector<std::string> feature_names = {});

// tree_limit < 0 means all trees; otherwise only the first tree_limit.
double predict_margin(const BoostedModel& model, const Eigen::VectorXd& x,
                      int tree_limit = -1);
double predict_proba(const BoostedModel& model, const Eigen::VectorXd& x,
                     int tree_limit = -1);

// Mean logistic loss of the first tree_limit trees on (x, y).
double log_loss(const BoostedModel& model, const Eigen::MatrixXd& x,
                const Eigen::VectorXi& y, int tree_limit = -1);

void save_model(const BoostedModel& model, const std::filesystem::path& path);
BoostedModel load_model(const std::filesystem::path& path);

// Path-dependent tree-Shapley attribution for one row, per feature.
// expected_margin(model) + phi.sum() equals predict_margin(model, x).
Eigen::VectorXd shap_values(const BoostedModel& model, const Eigen::VectorXd& x);

// Cover-weighted mean margin of the ensemble (the attribution base value).
double expected_margin(const BoostedModel& model);

// mean |phi| per feature over the rows of x.
Eigen::VectorXd mean_abs_shap(const BoostedModel& model, const Eigen::MatrixXd& x);

}  // namespace tracewatt
