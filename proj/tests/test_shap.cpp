#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tracewatt/gbdt.hpp"
#include "tracewatt/rng.hpp"

using namespace tracewatt;

namespace {

Tree leaf_tree(double w, double cover) {
  Tree t;
  TreeNode n;
  n.is_leaf = true;
  n.weight = w;
  n.cover = cover;
  t.nodes.push_back(n);
  return t;
}

Tree stump_tree(int feature, double threshold, bool default_left, double wl,
                double wr, double cl, double cr) {
  Tree t;
  TreeNode root;
  root.is_leaf = false;
  root.feature_index = feature;
  root.threshold = threshold;
  root.default_left = default_left;
  root.left = 1;
  root.right = 2;
  root.cover = cl + cr;
  t.nodes.push_back(root);
  TreeNode l;
  l.weight = wl;
  l.cover = cl;
  t.nodes.push_back(l);
  TreeNode r;
  r.weight = wr;
  r.cover = cr;
  t.nodes.push_back(r);
  return t;
}

// Random binary tree up to `depth`, features drawn from [0, n_features).
int grow_random(Tree& t, Rng& rng, int depth, int n_features, double cover) {
  const int idx = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (depth == 0 || rng.bernoulli(0.3)) {
    t.nodes[static_cast<std::size_t>(idx)].weight = rng.uniform(-2.0, 2.0);
    t.nodes[static_cast<std::size_t>(idx)].cover = cover;
    return idx;
  }
  const double frac = rng.uniform(0.2, 0.8);
  const int feature = static_cast<int>(rng.uniform_int(0, n_features - 1));
  const double threshold = rng.uniform(-1.0, 1.0);
  const bool default_left = rng.bernoulli(0.5);
  const int left = grow_random(t, rng, depth - 1, n_features, cover * frac);
  const int right = grow_random(t, rng, depth - 1, n_features, cover * (1.0 - frac));
  TreeNode& node = t.nodes[static_cast<std::size_t>(idx)];
  node.is_leaf = false;
  node.feature_index = feature;
  node.threshold = threshold;
  node.default_left = default_left;
  node.left = left;
  node.right = right;
  node.cover = cover;
  return idx;
}

BoostedModel wrap(std::vector<Tree> trees, int n_features) {
  BoostedModel m;
  m.trees = std::move(trees);
  m.feature_count = n_features;
  m.base_margin = 0.0;
  return m;
}

}  // namespace

TEST_CASE("single leaf attributes nothing") {
  const BoostedModel m = wrap({leaf_tree(0.7, 10.0)}, 3);
  const Eigen::VectorXd phi = shap_values(m, Eigen::VectorXd::Zero(3));
  for (int i = 0; i < 3; ++i) CHECK(phi[i] == 0.0);
  CHECK(expected_margin(m) == doctest::Approx(0.7));
}

TEST_CASE("stump puts all attribution on its split feature") {
  const BoostedModel m = wrap({stump_tree(1, 0.0, true, -1.0, 1.0, 4.0, 6.0)}, 3);
  Eigen::VectorXd x(3);
  x << 0.0, -0.5, 0.0;
  const Eigen::VectorXd phi = shap_values(m, x);
  CHECK(phi[0] == 0.0);
  CHECK(phi[2] == 0.0);
  // E = 0.4*(-1) + 0.6*1 = 0.2; row lands left: phi_1 = -1 - 0.2
  CHECK(phi[1] == doctest::Approx(-1.2).epsilon(1e-12));
  x[1] = 0.5;
  CHECK(shap_values(m, x)[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("missing value at a stump follows the default direction") {
  const BoostedModel left_default =
      wrap({stump_tree(0, 0.0, true, -1.0, 1.0, 5.0, 5.0)}, 2);
  const BoostedModel right_default =
      wrap({stump_tree(0, 0.0, false, -1.0, 1.0, 5.0, 5.0)}, 2);
  Eigen::VectorXd x(2);
  x << std::numeric_limits<double>::quiet_NaN(), 0.0;
  CHECK(shap_values(left_default, x)[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(shap_values(right_default, x)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("random trees match subset-enumeration Shapley values") {
  Rng rng(4242);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_features = 2 + static_cast<int>(rng.uniform_int(0, 2));
    Tree t;
    grow_random(t, rng, 2 + static_cast<int>(rng.uniform_int(0, 2)), n_features,
                rng.uniform(5.0, 50.0));
    const BoostedModel m = wrap({t}, n_features);
    for (int probe = 0; probe < 5; ++probe) {
      Eigen::VectorXd x(n_features);
      for (int f = 0; f < n_features; ++f)
        x[f] = rng.bernoulli(0.15) ? std::numeric_limits<double>::quiet_NaN()
                                   : rng.uniform(-1.5, 1.5);
      const Eigen::VectorXd got = shap_values(m, x);
      const Eigen::VectorXd want = oracles::brute_shapley(t, x, n_features);
      for (int f = 0; f < n_features; ++f)
        CHECK(got[f] == doctest::Approx(want[f]).epsilon(1e-9));
    }
  }
}

TEST_CASE("ensembles attribute additively across trees") {
  Rng rng(99);
  const int n_features = 3;
  Tree t1, t2;
  grow_random(t1, rng, 3, n_features, 20.0);
  grow_random(t2, rng, 3, n_features, 20.0);
  const BoostedModel both = wrap({t1, t2}, n_features);
  const BoostedModel only1 = wrap({t1}, n_features);
  const BoostedModel only2 = wrap({t2}, n_features);
  Eigen::VectorXd x(n_features);
  x << 0.3, -0.7, 1.1;
  const Eigen::VectorXd sum = shap_values(only1, x) + shap_values(only2, x);
  const Eigen::VectorXd got = shap_values(both, x);
  for (int f = 0; f < n_features; ++f)
    CHECK(got[f] == doctest::Approx(sum[f]).epsilon(1e-12));
}

TEST_CASE("local accuracy on fitted models") {
  Rng rng(321);
  const int n = 80;
  Eigen::MatrixXd x(n, 4);
  Eigen::VectorXi y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j)
      x(i, j) = rng.bernoulli(0.1) ? std::numeric_limits<double>::quiet_NaN()
                                   : rng.uniform(-2.0, 2.0);
    const double z = (std::isnan(x(i, 0)) ? 0.0 : x(i, 0)) -
                     (std::isnan(x(i, 2)) ? 0.0 : 0.5 * x(i, 2));
    y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-z))) ? 1 : 0;
  }
  HyperParams p;
  p.max_depth = 4;
  p.rounds = 30;
  p.min_child_weight = 0.5;
  const BoostedModel m = fit(x, y, p, 11);
  const double base = expected_margin(m);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd phi = shap_values(m, x.row(i));
    CHECK(base + phi.sum() ==
          doctest::Approx(predict_margin(m, x.row(i))).epsilon(1e-9));
  }
}

TEST_CASE("mean_abs_shap concentrates on informative features") {
  Rng rng(7);
  const int n = 200;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXi y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-2.0, 2.0);
    y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-3.0 * x(i, 1)))) ? 1 : 0;
  }
  HyperParams p;
  p.max_depth = 3;
  p.rounds = 40;
  const BoostedModel m = fit(x, y, p, 1);
  const Eigen::VectorXd imp = mean_abs_shap(m, x);
  CHECK(imp[1] > imp[0]);
  CHECK(imp[1] > imp[2]);
  for (int f = 0; f < 3; ++f) CHECK(imp[f] >= 0.0);
}
