#include "tracewatt/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "tracewatt/rng.hpp"

namespace tracewatt {

FoldPlan stratified_folds(const std::vector<int>& labels, int k,
                          std::uint64_t seed) {
  if (k < 2) throw SelectionError("fold count must be at least 2");
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (labels[i] == 1 ? pos : neg).push_back(static_cast<int>(i));
  if (static_cast<int>(pos.size()) < k || static_cast<int>(neg.size()) < k)
    throw SelectionError("a class has fewer members than folds");

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(labels.size(), -1);
  Rng rng(derive_seed(seed, "folds"));
  for (std::vector<int>* cls : {&pos, &neg}) {
    rng.shuffle(*cls);
    for (std::size_t i = 0; i < cls->size(); ++i)
      plan.assignments[static_cast<std::size_t>((*cls)[i])] =
          static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return plan;
}

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw SelectionError("auc: score/label length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }

  double rank_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] == 1) {
      rank_pos += rank[r];
      ++n_pos;
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw SelectionError("auc: single-class input");
  return (rank_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

HyperParams sample_params(const SearchSpace& space, std::uint64_t seed,
                          int candidate_index) {
  Rng rng(derive_seed(seed, "candidate", static_cast<std::uint64_t>(candidate_index)));
  HyperParams p;
  p.max_depth = static_cast<int>(rng.uniform_int(space.max_depth_lo, space.max_depth_hi));
  p.learning_rate = rng.log_uniform(space.learning_rate_lo, space.learning_rate_hi);
  p.min_child_weight =
      static_cast<double>(rng.uniform_int(space.min_child_weight_lo, space.min_child_weight_hi));
  p.subsample = rng.uniform(space.subsample_lo, space.subsample_hi);
  p.colsample = rng.uniform(space.colsample_lo, space.colsample_hi);
  p.gamma = rng.uniform(space.gamma_lo, space.gamma_hi);
  return p;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

Eigen::VectorXi take_labels(const Eigen::VectorXi& y, const std::vector<int>& rows) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = y[rows[i]];
  return out;
}

std::vector<int> as_vector(const Eigen::VectorXi& y) {
  return std::vector<int>(y.data(), y.data() + y.size());
}

// Mean AUC of one candidate under inner stratified CV.
double evaluate_candidate(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                          HyperParams params, int rounds, int inner_k,
                          std::uint64_t seed, int candidate_index) {
  params.rounds = rounds;
  const FoldPlan plan = stratified_folds(as_vector(y), inner_k,
                                         derive_seed(seed, "inner_folds"));
  double auc_sum = 0.0;
  for (int fold = 0; fold < inner_k; ++fold) {
    std::vector<int> train, val;
    for (std::size_t i = 0; i < plan.assignments.size(); ++i)
      (plan.assignments[i] == fold ? val : train).push_back(static_cast<int>(i));
    const BoostedModel model =
        fit(take_rows(x, train), take_labels(y, train), params,
            derive_seed(seed, "inner_fit",
                        static_cast<std::uint64_t>(candidate_index) * 1000 +
                            static_cast<std::uint64_t>(fold)));
    std::vector<double> scores;
    std::vector<int> labels;
    for (int r : val) {
      scores.push_back(predict_proba(model, x.row(r)));
      labels.push_back(y[r]);
    }
    auc_sum += auc_roc(scores, labels);
  }
  return auc_sum / static_cast<double>(inner_k);
}

}  // namespace

HalvingResult halving_search(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                             const SearchSpace& space, int inner_k,
                             std::uint64_t seed, const HalvingConfig& config) {
  if (config.n_candidates < 1) throw SelectionError("need at least 1 candidate");
  std::vector<HyperParams> candidates;
  for (int i = 0; i < config.n_candidates; ++i)
    candidates.push_back(sample_params(space, seed, i));

  std::vector<int> alive(static_cast<std::size_t>(config.n_candidates));
  std::iota(alive.begin(), alive.end(), 0);

  HalvingResult result;
  int rung = 0;
  while (true) {
    int rounds = config.max_rounds;
    double budget = static_cast<double>(config.min_rounds);
    for (int r = 0; r < rung; ++r) budget *= config.factor;
    if (budget < config.max_rounds) rounds = static_cast<int>(budget);

    result.rung_rounds.push_back(rounds);
    result.rung_survivors.push_back(alive);

    std::vector<std::pair<double, int>> scored;  // (-auc, candidate index)
    for (int ci : alive) {
      const double auc = evaluate_candidate(x, y, candidates[static_cast<std::size_t>(ci)],
                                            rounds, inner_k, seed, ci);
      scored.emplace_back(-auc, ci);
    }
    std::sort(scored.begin(), scored.end());

    if (alive.size() == 1 && rounds >= config.max_rounds) {
      result.best = candidates[static_cast<std::size_t>(scored.front().second)];
      result.rounds = rounds;
      result.best.rounds = rounds;
      return result;
    }

    const std::size_t keep = (alive.size() + static_cast<std::size_t>(config.factor) - 1) /
                             static_cast<std::size_t>(config.factor);
    alive.clear();
    for (std::size_t i = 0; i < keep; ++i) alive.push_back(scored[i].second);
    ++rung;
  }
}

NestedCVResult nested_cv(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                         int outer_k, int inner_k, std::uint64_t seed,
                         const SearchSpace& space, const HalvingConfig& config,
                         int threads) {
  const FoldPlan plan =
      stratified_folds(as_vector(y), outer_k, derive_seed(seed, "outer_folds"));

  NestedCVResult result;
  result.fold_models.resize(static_cast<std::size_t>(outer_k));
  result.report.per_outer_fold.resize(static_cast<std::size_t>(outer_k));
  result.report.oof_scores.assign(static_cast<std::size_t>(x.rows()), 0.0);
  result.report.oof_fold.assign(static_cast<std::size_t>(x.rows()), -1);

  auto run_fold = [&](int fold) {
    std::vector<int> train, test;
    for (std::size_t i = 0; i < plan.assignments.size(); ++i)
      (plan.assignments[i] == fold ? test : train).push_back(static_cast<int>(i));
    const Eigen::MatrixXd xt = take_rows(x, train);
    const Eigen::VectorXi yt = take_labels(y, train);
    const std::uint64_t fold_seed =
        derive_seed(seed, "outer_fold", static_cast<std::uint64_t>(fold));

    const HalvingResult search = halving_search(xt, yt, space, inner_k, fold_seed, config);
    const BoostedModel model =
        fit(xt, yt, search.best, derive_seed(fold_seed, "refit"));

    std::vector<double> scores;
    std::vector<int> labels;
    for (int r : test) {
      const double s = predict_proba(model, x.row(r));
      result.report.oof_scores[static_cast<std::size_t>(r)] = s;
      result.report.oof_fold[static_cast<std::size_t>(r)] = fold;
      scores.push_back(s);
      labels.push_back(y[r]);
    }
    OuterFoldResult& out = result.report.per_outer_fold[static_cast<std::size_t>(fold)];
    out.fold = fold;
    out.auc = auc_roc(scores, labels);
    out.best_params = search.best;
    out.rounds_used = search.rounds;
    out.train_rows = train;
    result.fold_models[static_cast<std::size_t>(fold)] = model;
  };

  if (threads <= 1) {
    for (int fold = 0; fold < outer_k; ++fold) run_fold(fold);
  } else {
    // Each fold writes only its own slots; aggregation below is fixed-order.
    std::vector<std::future<void>> futures;
    for (int fold = 0; fold < outer_k; ++fold)
      futures.push_back(std::async(std::launch::async, run_fold, fold));
    for (auto& f : futures) f.get();
  }

  double sum = 0.0;
  for (const OuterFoldResult& f : result.report.per_outer_fold) sum += f.auc;
  result.report.mean_auc = sum / static_cast<double>(outer_k);
  double ss = 0.0;
  for (const OuterFoldResult& f : result.report.per_outer_fold) {
    const double d = f.auc - result.report.mean_auc;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(outer_k - 1));
  result.report.ci95_halfwidth = 1.96 * sd / std::sqrt(static_cast<double>(outer_k));
  return result;
}

FinalModel train_final(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                       int inner_k, std::uint64_t seed, const SearchSpace& space,
                       const HalvingConfig& config,
                       std::vector<std::string> feature_names) {
  FinalModel out;
  out.search = halving_search(x, y, space, inner_k, derive_seed(seed, "final_search"),
                              config);
  out.model = fit(x, y, out.search.best, derive_seed(seed, "final_fit"),
                  std::move(feature_names));
  return out;
}

}  // namespace tracewatt
