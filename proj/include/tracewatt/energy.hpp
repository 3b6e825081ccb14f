#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tracewatt/trace.hpp"

namespace tracewatt {

class EnergyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Phase { inference, tool, other };

const char* phase_name(Phase p);

struct PhaseWindow {
  int step_index = 0;
  Phase phase = Phase::other;
  std::int64_t t0_ms = 0;
  std::int64_t t1_ms = 0;
};

struct TimedPower {
  std::int64_t t_ms = 0;
  double mw = 0.0;
};

inline constexpr double kMwMsPerMwh = 3.6e6;

// Trapezoidal integral of one component's piecewise-linear power over
// [t0_ms, t1_ms], in mWh. Window ends are linearly interpolated. Any
// inter-sample gap contributes nothing beyond its first gap_cap_ms
// (power is treated as zero past the cap until the next sample), which
// keeps long sampling outages from being bridged by one huge trapezoid.
double integrate_power(const std::vector<TimedPower>& samples,
                       std::int64_t t0_ms, std::int64_t t1_ms,
                       std::int64_t gap_cap_ms);

// Tiles the run span [first step start, last event end] with non-overlapping
// windows: one inference window per step, one tool window per tool call,
// "other" for the remaining time. Gaps between steps belong to the later
// step (that energy is not yet spent when a run stops after the earlier one).
std::vector<PhaseWindow> derive_phases(const Trajectory& trajectory);

struct StepEnergy {
  int step_index = 0;
  double inference_mwh = 0.0;
  double tool_mwh = 0.0;
  double other_mwh = 0.0;

  double total() const { return inference_mwh + tool_mwh + other_mwh; }
};

struct EnergyLedger {
  std::string run_id;
  std::vector<StepEnergy> per_step_mwh;
  double total_mwh = 0.0;
  double classifier_cost_mwh = 0.01;

  // Energy of steps 1..s (their tool and other phases included).
  double partial_mwh(int s) const;
};

struct EnergyConfig {
  std::int64_t gap_cap_ms = 1000;
  std::vector<std::string> gpu_components = {"gpu"};
  std::vector<std::string> cpu_components = {"cpu"};
  double classifier_cost_mwh = 0.01;
};

// GPU components are charged in full; CPU components have
// baseline_cpu_mw x duration subtracted in non-inference windows, clamped
// at zero per window.
EnergyLedger build_ledger(const RunBundle& bundle, const EnergyConfig& config);

// One run's outcome under a stop policy, ready for the wastage formulas.
struct StopDecision {
  std::string run_id;
  double full_mwh = 0.0;
  double partial_mwh = 0.0;  // energy up to and including the decision step
  int outcome = 0;
  bool stopped = false;
  bool had_decision = false;  // false when the run ended before the step
};

// Energy spent by runs that ended in failure, over completed trajectories.
double energy_wastage(const std::vector<StopDecision>& runs);

// Four-term sum: unstopped failures pay full, stopped failures and stopped
// successes pay partial, and every decided run pays the classifier cost.
double early_stop_wastage(const std::vector<StopDecision>& runs,
                          double classifier_cost_mwh);

struct MetricBundle {
  double wastage_mwh = 0.0;  // completed-trajectory baseline over failures
  double early_stop_wastage_mwh = 0.0;
  double reduction_pct = 0.0;
  double utility_drop_pct = 0.0;
  int stopped_failures = 0;
  int stopped_successes = 0;
  int continued_failures = 0;
  int continued_successes = 0;
  // Set when a ratio is undefined (no failures / no successes); the
  // corresponding pct is NaN.
  std::optional<std::string> note;
};

MetricBundle metrics(const std::vector<StopDecision>& runs,
                     double classifier_cost_mwh);

// Appends per-step rows plus a trailing TOTAL row; header written by caller.
void append_ledger_csv(std::ostream& out, const EnergyLedger& ledger);

inline constexpr const char* kLedgerCsvHeader =
    "run_id,step_index,inference_mwh,tool_mwh,other_mwh";

}  // namespace tracewatt
