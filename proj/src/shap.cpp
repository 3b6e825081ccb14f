#include <cmath>
#include <vector>

#include "tracewatt/gbdt.hpp"

// Path-dependent tree-Shapley attribution (Lundberg & Lee's TreeSHAP with
// the extend/unwind path bookkeeping). Covers are training hessian sums, so
// the background distribution is the tree's own training traffic.

namespace tracewatt {

namespace {

struct PathElement {
  int feature_index = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(PathElement* path, int unique_depth, double zero_fraction,
                 double one_fraction, int feature_index) {
  path[unique_depth] = {feature_index, zero_fraction, one_fraction,
                        unique_depth == 0 ? 1.0 : 0.0};
  for (int i = unique_depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) /
                           static_cast<double>(unique_depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (unique_depth - i) /
                      static_cast<double>(unique_depth + 1);
  }
}

void unwind_path(PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;

  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (unique_depth + 1) /
                        static_cast<double>((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction *
                                   (unique_depth - i) /
                                   static_cast<double>(unique_depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (unique_depth + 1) /
                        (zero_fraction * (unique_depth - i));
    }
  }
  for (int i = path_index; i < unique_depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElement* path, int unique_depth,
                        int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  double total = 0.0;
  if (one_fraction != 0.0) {
    for (int i = unique_depth - 1; i >= 0; --i) {
      const double tmp = next_one_portion / static_cast<double>((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero_fraction * (unique_depth - i);
    }
  } else {
    for (int i = unique_depth - 1; i >= 0; --i) {
      total += path[i].pweight / (zero_fraction * (unique_depth - i));
    }
  }
  return total * (unique_depth + 1);
}

void shap_recurse(const Tree& tree, const Eigen::VectorXd& x,
                  Eigen::VectorXd& phi, int node_index, int unique_depth,
                  PathElement* parent_path, double parent_zero_fraction,
                  double parent_one_fraction, int parent_feature_index) {
  PathElement* path = parent_path + unique_depth + 1;
  std::copy(parent_path, parent_path + unique_depth + 1, path);
  extend_path(path, unique_depth, parent_zero_fraction, parent_one_fraction,
              parent_feature_index);

  const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];
  if (node.is_leaf) {
    for (int i = 1; i <= unique_depth; ++i) {
      const double w = unwound_path_sum(path, unique_depth, i);
      const PathElement& el = path[i];
      phi[el.feature_index] +=
          w * (el.one_fraction - el.zero_fraction) * node.weight;
    }
    return;
  }

  const double v = x[node.feature_index];
  const bool go_left = std::isnan(v) ? node.default_left : v < node.threshold;
  const int hot = go_left ? node.left : node.right;
  const int cold = go_left ? node.right : node.left;
  const double hot_zero_fraction =
      tree.nodes[static_cast<std::size_t>(hot)].cover / node.cover;
  const double cold_zero_fraction =
      tree.nodes[static_cast<std::size_t>(cold)].cover / node.cover;
  double incoming_zero_fraction = 1.0;
  double incoming_one_fraction = 1.0;

  // A repeated split feature on the path is unwound and redone here.
  int path_index = 0;
  for (; path_index <= unique_depth; ++path_index) {
    if (path[path_index].feature_index == node.feature_index) break;
  }
  if (path_index != unique_depth + 1) {
    incoming_zero_fraction = path[path_index].zero_fraction;
    incoming_one_fraction = path[path_index].one_fraction;
    unwind_path(path, unique_depth, path_index);
    unique_depth -= 1;
  }

  shap_recurse(tree, x, phi, hot, unique_depth + 1, path,
               hot_zero_fraction * incoming_zero_fraction,
               incoming_one_fraction, node.feature_index);
  shap_recurse(tree, x, phi, cold, unique_depth + 1, path,
               cold_zero_fraction * incoming_zero_fraction, 0.0,
               node.feature_index);
}

int tree_max_depth(const Tree& tree, int node, int depth) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf) return depth;
  return std::max(tree_max_depth(tree, n.left, depth + 1),
                  tree_max_depth(tree, n.right, depth + 1));
}

double tree_expected_value(const Tree& tree, int node) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf) return n.weight;
  const double cl = tree.nodes[static_cast<std::size_t>(n.left)].cover;
  const double cr = tree.nodes[static_cast<std::size_t>(n.right)].cover;
  return (cl * tree_expected_value(tree, n.left) +
          cr * tree_expected_value(tree, n.right)) /
         (cl + cr);
}

}  // namespace

Eigen::VectorXd shap_values(const BoostedModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.feature_count)
    throw ModelError("shap: feature width mismatch");
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(model.feature_count);
  for (const Tree& tree : model.trees) {
    const int depth = tree_max_depth(tree, 0, 0);
    // One contiguous arena for all path copies along the recursion.
    std::vector<PathElement> arena(
        static_cast<std::size_t>((depth + 2) * (depth + 3)) / 2 + 1);
    shap_recurse(tree, x, phi, 0, 0, arena.data(), 1.0, 1.0, -1);
  }
  return phi;
}

double expected_margin(const BoostedModel& model) {
  double e = model.base_margin;
  for (const Tree& tree : model.trees) e += tree_expected_value(tree, 0);
  return e;
}

Eigen::VectorXd mean_abs_shap(const BoostedModel& model, const Eigen::MatrixXd& x) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.feature_count);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    acc += shap_values(model, x.row(i)).cwiseAbs();
  return acc / static_cast<double>(x.rows());
}

}  // namespace tracewatt
