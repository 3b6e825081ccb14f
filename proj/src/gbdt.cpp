#include "tracewatt/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "tracewatt/rng.hpp"

namespace tracewatt {

namespace {

double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
  double score = 0.0;
  // children stats for recursion bookkeeping
  double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const std::vector<double>& g,
              const std::vector<double>& h, const HyperParams& p)
      : x_(x), g_(g), h_(h), p_(p) {}

  Tree build(const std::vector<int>& rows, const std::vector<int>& cols) {
    Tree tree;
    grow(tree, rows, cols, 0);
    return tree;
  }

 private:
  int grow(Tree& tree, const std::vector<int>& rows,
           const std::vector<int>& cols, int depth) {
    double gsum = 0.0, hsum = 0.0;
    for (int r : rows) {
      gsum += g_[static_cast<std::size_t>(r)];
      hsum += h_[static_cast<std::size_t>(r)];
    }

    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[static_cast<std::size_t>(id)].cover = hsum;

    SplitChoice best;
    if (depth < p_.max_depth) best = find_split(rows, cols, gsum, hsum);

    if (!best.found) {
      TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
      node.is_leaf = true;
      node.weight = -gsum / (hsum + p_.l2_lambda) * p_.learning_rate;
      return id;
    }

    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
      const double v = x_(r, best.feature);
      const bool go_left = std::isnan(v) ? best.default_left : v < best.threshold;
      (go_left ? left_rows : right_rows).push_back(r);
    }
    const int left = grow(tree, left_rows, cols, depth + 1);
    const int right = grow(tree, right_rows, cols, depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    node.is_leaf = false;
    node.feature_index = best.feature;
    node.threshold = best.threshold;
    node.default_left = best.default_left;
    node.gain = best.score;
    node.left = left;
    node.right = right;
    return id;
  }

  SplitChoice find_split(const std::vector<int>& rows,
                         const std::vector<int>& cols, double gsum,
                         double hsum) const {
    const double lam = p_.l2_lambda;
    const double parent_score = gsum * gsum / (hsum + lam);
    SplitChoice best;
    std::vector<std::pair<double, int>> vals;
    for (int f : cols) {
      vals.clear();
      double gmiss = 0.0, hmiss = 0.0;
      for (int r : rows) {
        const double v = x_(r, f);
        if (std::isnan(v)) {
          gmiss += g_[static_cast<std::size_t>(r)];
          hmiss += h_[static_cast<std::size_t>(r)];
        } else {
          vals.emplace_back(v, r);
        }
      }
      if (vals.size() < 2) continue;
      std::sort(vals.begin(), vals.end());

      double glp = 0.0, hlp = 0.0;  // present-value prefix sums
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        glp += g_[static_cast<std::size_t>(vals[i].second)];
        hlp += h_[static_cast<std::size_t>(vals[i].second)];
        if (vals[i].first == vals[i + 1].first) continue;
        const double thr = 0.5 * (vals[i].first + vals[i + 1].first);
        // Missing rows go to whichever side scores higher; left first so
        // ties resolve to default_left.
        for (const bool missing_left : {true, false}) {
          const double gl = glp + (missing_left ? gmiss : 0.0);
          const double hl = hlp + (missing_left ? hmiss : 0.0);
          const double gr = gsum - gl;
          const double hr = hsum - hl;
          if (hl < p_.min_child_weight || hr < p_.min_child_weight) continue;
          const double score =
              0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score) -
              p_.gamma;
          if (score > best.score) {
            best = {true, f, thr, missing_left, score, gl, hl, gr, hr};
          }
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const HyperParams& p_;
};

std::vector<int> sample_indices(int n, double rate, Rng& rng) {
  std::vector<int> out;
  for (int attempt = 0; attempt < 2 && out.empty(); ++attempt) {
    for (int i = 0; i < n; ++i)
      if (rng.bernoulli(rate)) out.push_back(i);
  }
  // Low rates on few columns/rows can legitimately draw nothing twice;
  // keep one index so every round still fits a tree.
  if (out.empty()) out.push_back(static_cast<int>(rng.uniform_int(0, n - 1)));
  return out;
}

}  // namespace

double Tree::predict(const Eigen::VectorXd& x) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    const double v = x[n.feature_index];
    const bool go_left = std::isnan(v) ? n.default_left : v < n.threshold;
    i = go_left ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].weight;
}

BoostedModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                 const HyperParams& params, std::uint64_t seed,
                 std::vector<std::string> feature_names) {
  const int n = static_cast<int>(x.rows());
  const int m = static_cast<int>(x.cols());
  if (n < 2) throw ModelError("need at least 2 rows");
  if (y.size() != n) throw ModelError("label count does not match row count");

  double wsum = 0.0, wpos = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = y[i] == 1 ? params.pos_weight : 1.0;
    wsum += w;
    if (y[i] == 1) wpos += w;
  }
  if (wpos == 0.0 || wpos == wsum)
    throw ModelError("labels are single-class; cannot fit");
  const double prior = wpos / wsum;

  BoostedModel model;
  model.hyperparams = params;
  model.feature_count = m;
  model.feature_names = std::move(feature_names);
  model.base_margin = std::log(prior / (1.0 - prior));

  std::vector<double> margin(static_cast<std::size_t>(n), model.base_margin);
  std::vector<double> g(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n));

  for (int round = 0; round < params.rounds; ++round) {
    for (int i = 0; i < n; ++i) {
      const double w = y[i] == 1 ? params.pos_weight : 1.0;
      const double p = sigmoid(margin[static_cast<std::size_t>(i)]);
      g[static_cast<std::size_t>(i)] = w * (p - static_cast<double>(y[i]));
      h[static_cast<std::size_t>(i)] = w * p * (1.0 - p);
    }

    Rng row_rng(derive_seed(seed, "rows", static_cast<std::uint64_t>(round)));
    Rng col_rng(derive_seed(seed, "cols", static_cast<std::uint64_t>(round)));
    std::vector<int> rows = params.subsample >= 1.0
                                ? std::vector<int>()
                                : sample_indices(n, params.subsample, row_rng);
    if (params.subsample >= 1.0) {
      rows.resize(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), 0);
    }
    std::vector<int> cols = params.colsample >= 1.0
                                ? std::vector<int>()
                                : sample_indices(m, params.colsample, col_rng);
    if (params.colsample >= 1.0) {
      cols.resize(static_cast<std::size_t>(m));
      std::iota(cols.begin(), cols.end(), 0);
    }

    TreeBuilder builder(x, g, h, params);
    Tree tree = builder.build(rows, cols);
    for (int i = 0; i < n; ++i)
      margin[static_cast<std::size_t>(i)] += tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

double predict_margin(const BoostedModel& model, const Eigen::VectorXd& x,
                      int tree_limit) {
  if (x.size() != model.feature_count)
    throw ModelError("feature width mismatch: got " + std::to_string(x.size()) +
                     ", expected " + std::to_string(model.feature_count));
  const std::size_t limit =
      tree_limit < 0 ? model.trees.size()
                     : std::min<std::size_t>(static_cast<std::size_t>(tree_limit),
                                             model.trees.size());
  double margin = model.base_margin;
  for (std::size_t t = 0; t < limit; ++t) margin += model.trees[t].predict(x);
  return margin;
}

double predict_proba(const BoostedModel& model, const Eigen::VectorXd& x,
                     int tree_limit) {
  return sigmoid(predict_margin(model, x, tree_limit));
}

double log_loss(const BoostedModel& model, const Eigen::MatrixXd& x,
                const Eigen::VectorXi& y, int tree_limit) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double margin = predict_margin(model, x.row(i), tree_limit);
    // log(1+exp(m)) - y*m, numerically stable
    const double softplus =
        margin > 0 ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
    loss += softplus - static_cast<double>(y[i]) * margin;
  }
  return loss / static_cast<double>(x.rows());
}

namespace {

using nlohmann::json;

json node_to_json(const TreeNode& n) {
  if (n.is_leaf) return {{"weight", n.weight}, {"cover", n.cover}};
  return {{"feature_index", n.feature_index},
          {"threshold", n.threshold},
          {"default_left", n.default_left},
          {"gain", n.gain},
          {"cover", n.cover},
          {"left", n.left},
          {"right", n.right}};
}

TreeNode node_from_json(const json& j) {
  TreeNode n;
  if (j.contains("weight")) {
    n.is_leaf = true;
    n.weight = j.at("weight").get<double>();
  } else {
    n.is_leaf = false;
    n.feature_index = j.at("feature_index").get<int>();
    n.threshold = j.at("threshold").get<double>();
    n.default_left = j.at("default_left").get<bool>();
    n.gain = j.at("gain").get<double>();
    n.left = j.at("left").get<int>();
    n.right = j.at("right").get<int>();
  }
  n.cover = j.at("cover").get<double>();
  return n;
}

}  // namespace

void save_model(const BoostedModel& model, const std::filesystem::path& path) {
  json trees = json::array();
  for (const Tree& t : model.trees) {
    json nodes = json::array();
    for (const TreeNode& n : t.nodes) nodes.push_back(node_to_json(n));
    trees.push_back(std::move(nodes));
  }
  const HyperParams& p = model.hyperparams;
  const json j = {
      {"schema_version", 1},
      {"base_margin", model.base_margin},
      {"feature_count", model.feature_count},
      {"feature_names", model.feature_names},
      {"hyperparams",
       {{"max_depth", p.max_depth},
        {"learning_rate", p.learning_rate},
        {"min_child_weight", p.min_child_weight},
        {"subsample", p.subsample},
        {"colsample", p.colsample},
        {"gamma", p.gamma},
        {"l2_lambda", p.l2_lambda},
        {"rounds", p.rounds},
        {"pos_weight", p.pos_weight}}},
      {"trees", std::move(trees)}};
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

BoostedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ModelError("model parse error: " + std::string(e.what()));
  }
  BoostedModel model;
  model.base_margin = j.at("base_margin").get<double>();
  model.feature_count = j.at("feature_count").get<int>();
  model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  const json& p = j.at("hyperparams");
  model.hyperparams.max_depth = p.at("max_depth").get<int>();
  model.hyperparams.learning_rate = p.at("learning_rate").get<double>();
  model.hyperparams.min_child_weight = p.at("min_child_weight").get<double>();
  model.hyperparams.subsample = p.at("subsample").get<double>();
  model.hyperparams.colsample = p.at("colsample").get<double>();
  model.hyperparams.gamma = p.at("gamma").get<double>();
  model.hyperparams.l2_lambda = p.at("l2_lambda").get<double>();
  model.hyperparams.rounds = p.at("rounds").get<int>();
  model.hyperparams.pos_weight = p.at("pos_weight").get<double>();
  for (const json& jt : j.at("trees")) {
    Tree t;
    for (const json& jn : jt) t.nodes.push_back(node_from_json(jn));
    model.trees.push_back(std::move(t));
  }
  return model;
}

}  // namespace tracewatt
