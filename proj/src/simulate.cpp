#include "tracewatt/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "tracewatt/rng.hpp"

namespace tracewatt {

const char* policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::classifier: return "classifier";
    case PolicyKind::random: return "random";
    case PolicyKind::min_logprob: return "min_logprob";
    case PolicyKind::mean_logprob: return "mean_logprob";
  }
  return "?";
}

Decision decide(const Policy& policy, const Trajectory& trajectory, int s) {
  Decision d;
  d.had_decision = static_cast<int>(trajectory.steps.size()) >= s;
  if (!d.had_decision) return d;
  const Step& step = trajectory.steps[static_cast<std::size_t>(s) - 1];

  switch (policy.kind) {
    case PolicyKind::classifier: {
      const auto it = policy.success_proba.find(trajectory.run_id);
      if (it == policy.success_proba.end())
        throw SimulateError("no classifier score for run " + trajectory.run_id);
      d.stopped = it->second < policy.tau;
      break;
    }
    case PolicyKind::random: {
      Rng rng(policy.seed ^ fnv1a64(trajectory.run_id));
      d.stopped = rng.bernoulli(policy.p_stop);
      break;
    }
    case PolicyKind::min_logprob: {
      double lo = std::numeric_limits<double>::infinity();
      for (const TokenEvent& t : step.tokens) lo = std::min(lo, t.logprob);
      d.stopped = lo < policy.theta;  // empty step never stops
      break;
    }
    case PolicyKind::mean_logprob: {
      if (step.tokens.empty()) break;
      double sum = 0.0;
      for (const TokenEvent& t : step.tokens) sum += t.logprob;
      d.stopped = sum / static_cast<double>(step.tokens.size()) < policy.theta;
      break;
    }
  }
  return d;
}

SimulationResult simulate(const std::vector<SimRun>& corpus, const Policy& policy,
                          const SimulationConfig& config) {
  if (config.decision_step < 1) throw SimulateError("decision_step must be >= 1");
  if (config.cutoff_step && *config.cutoff_step < config.decision_step)
    throw SimulateError("cutoff_step must be >= decision_step");

  SimulationResult result;
  result.kind = policy.kind;
  result.policy_name = policy_kind_name(policy.kind);
  switch (policy.kind) {
    case PolicyKind::classifier: result.threshold = policy.tau; break;
    case PolicyKind::random: result.threshold = policy.p_stop; break;
    default: result.threshold = policy.theta;
  }

  const int cutoff = config.cutoff_step.value_or(std::numeric_limits<int>::max());
  for (const SimRun& run : corpus) {
    StopDecision sd;
    sd.run_id = run.trajectory->run_id;
    sd.outcome = run.trajectory->outcome;
    sd.full_mwh = run.ledger->partial_mwh(cutoff);
    sd.partial_mwh = run.ledger->partial_mwh(std::min(config.decision_step, cutoff));
    const Decision d = decide(policy, *run.trajectory, config.decision_step);
    sd.had_decision = d.had_decision;
    sd.stopped = d.stopped;
    result.decision_log.push_back(std::move(sd));
  }

  const double cost =
      policy.kind == PolicyKind::classifier ? config.classifier_cost_mwh : 0.0;
  result.bundle = metrics(result.decision_log, cost);
  return result;
}

std::vector<SimulationResult> sweep(const std::vector<SimRun>& corpus,
                                    Policy policy_family,
                                    const SimulationConfig& config,
                                    const std::vector<double>& thresholds) {
  std::vector<SimulationResult> out;
  for (double t : thresholds) {
    switch (policy_family.kind) {
      case PolicyKind::classifier: policy_family.tau = t; break;
      case PolicyKind::random: policy_family.p_stop = t; break;
      default: policy_family.theta = t;
    }
    out.push_back(simulate(corpus, policy_family, config));
  }
  return out;
}

Comparison compare(const std::vector<SimRun>& corpus,
                   const std::vector<std::pair<Policy, std::vector<double>>>& policies,
                   const SimulationConfig& config) {
  Comparison cmp;
  for (const auto& [policy, thresholds] : policies) {
    for (SimulationResult& r : sweep(corpus, policy, config, thresholds)) {
      cmp.rows.push_back({r.policy_name, r.threshold, r.bundle.reduction_pct,
                          r.bundle.utility_drop_pct, r.bundle.stopped_failures,
                          r.bundle.stopped_successes});
      cmp.results.push_back(std::move(r));
    }
  }
  return cmp;
}

double dominance_fraction(const std::vector<SimulationResult>& a,
                          const std::vector<SimulationResult>& b) {
  std::set<double> levels;
  for (const auto* curve : {&a, &b}) {
    for (const SimulationResult& r : *curve)
      if (!std::isnan(r.bundle.utility_drop_pct))
        levels.insert(r.bundle.utility_drop_pct);
  }
  if (levels.empty()) throw SimulateError("dominance: no comparable points");

  // Best reduction achievable while keeping drop at or below the level.
  auto envelope = [](const std::vector<SimulationResult>& curve, double level) {
    double best = -std::numeric_limits<double>::infinity();
    for (const SimulationResult& r : curve) {
      if (std::isnan(r.bundle.utility_drop_pct) || std::isnan(r.bundle.reduction_pct))
        continue;
      if (r.bundle.utility_drop_pct <= level + 1e-9)
        best = std::max(best, r.bundle.reduction_pct);
    }
    return best;
  };

  int wins = 0;
  int total = 0;
  for (double level : levels) {
    const double ea = envelope(a, level);
    const double eb = envelope(b, level);
    if (std::isinf(ea) && std::isinf(eb)) continue;
    ++total;
    if (ea >= eb - 1e-12) ++wins;
  }
  if (total == 0) throw SimulateError("dominance: no comparable points");
  return static_cast<double>(wins) / static_cast<double>(total);
}

}  // namespace tracewatt
