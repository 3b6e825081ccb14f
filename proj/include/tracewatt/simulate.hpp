#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracewatt/energy.hpp"
#include "tracewatt/features.hpp"
#include "tracewatt/trace.hpp"

namespace tracewatt {

class SimulateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PolicyKind { classifier, random, min_logprob, mean_logprob };

const char* policy_kind_name(PolicyKind k);

// Stop rule orientation: every policy scores confidence and stops when the
// score falls below the threshold.
struct Policy {
  PolicyKind kind = PolicyKind::classifier;
  // classifier: success probability per run (out-of-fold by convention,
  // so no run is scored by a model that trained on it) and tau in [0,1].
  std::map<std::string, double> success_proba;
  double tau = 0.5;
  // random: Bernoulli(p_stop) per run, reseeded from run_id so decisions
  // are independent of corpus iteration order.
  double p_stop = 0.0;
  std::uint64_t seed = 0;
  // min_logprob / mean_logprob: threshold theta (<= 0) on the latest step.
  double theta = 0.0;
};

struct SimulationConfig {
  int decision_step = 1;
  std::optional<int> cutoff_step;  // per-step energy beyond it is excluded
  double classifier_cost_mwh = 0.01;
};

struct Decision {
  bool had_decision = false;
  bool stopped = false;
};

Decision decide(const Policy& policy, const Trajectory& trajectory, int s);

struct SimulationResult {
  std::string policy_name;
  PolicyKind kind = PolicyKind::classifier;
  double threshold = 0.0;
  MetricBundle bundle;
  std::vector<StopDecision> decision_log;
};

struct SimRun {
  const Trajectory* trajectory = nullptr;
  const EnergyLedger* ledger = nullptr;
};

// Rerun-free replay: decisions read only steps 1..s, energies come only
// from the recorded ledgers. The classifier cost is charged per decided
// run for the classifier policy only.
SimulationResult simulate(const std::vector<SimRun>& corpus, const Policy& policy,
                          const SimulationConfig& config);

// One result per threshold. For the random family, thresholds are p_stop
// values; for logprob families, theta values.
std::vector<SimulationResult> sweep(const std::vector<SimRun>& corpus,
                                    Policy policy_family,
                                    const SimulationConfig& config,
                                    const std::vector<double>& thresholds);

struct ComparisonRow {
  std::string policy;
  double threshold = 0.0;
  double reduction_pct = 0.0;
  double drop_pct = 0.0;
  int stopped_failures = 0;
  int stopped_successes = 0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::vector<SimulationResult> results;
};

Comparison compare(const std::vector<SimRun>& corpus,
                   const std::vector<std::pair<Policy, std::vector<double>>>& policies,
                   const SimulationConfig& config);

// Fraction of matched utility-drop levels at which curve a's best reduction
// is at least curve b's. Levels are the union of both curves' drop values;
// at each level the best reduction among points with drop <= level counts.
double dominance_fraction(const std::vector<SimulationResult>& a,
                          const std::vector<SimulationResult>& b);

}  // namespace tracewatt
