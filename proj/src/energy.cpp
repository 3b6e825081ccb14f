#include "tracewatt/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace tracewatt {

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::inference: return "inference";
    case Phase::tool: return "tool";
    case Phase::other: return "other";
  }
  return "?";
}

namespace {

// Fixed-order compensated summation; keeps window-split additivity at
// 1e-9 relative.
class KahanSum {
 public:
  void add(double v) {
    const double y = v - c_;
    const double t = sum_ + y;
    c_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

double lerp_mw(const TimedPower& a, const TimedPower& b, double t) {
  const double span = static_cast<double>(b.t_ms - a.t_ms);
  const double frac = (t - static_cast<double>(a.t_ms)) / span;
  return a.mw + (b.mw - a.mw) * frac;
}

}  // namespace

double integrate_power(const std::vector<TimedPower>& samples,
                       std::int64_t t0_ms, std::int64_t t1_ms,
                       std::int64_t gap_cap_ms) {
  if (samples.empty()) throw EnergyError("integrate_power: no samples");
  if (t1_ms < t0_ms) throw EnergyError("integrate_power: malformed window");
  if (t1_ms < samples.front().t_ms || t0_ms > samples.back().t_ms)
    throw EnergyError("integrate_power: window outside sample span");

  KahanSum mw_ms;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const TimedPower& a = samples[i];
    const TimedPower& b = samples[i + 1];
    // Portion of this segment that carries power: the first gap_cap_ms.
    const std::int64_t seg_end = std::min(b.t_ms, a.t_ms + gap_cap_ms);
    const double lo = static_cast<double>(std::max(a.t_ms, t0_ms));
    const double hi = static_cast<double>(std::min(seg_end, t1_ms));
    if (hi <= lo) continue;
    const double p0 = lerp_mw(a, b, lo);
    const double p1 = lerp_mw(a, b, hi);
    mw_ms.add(0.5 * (p0 + p1) * (hi - lo));
  }
  return mw_ms.value() / kMwMsPerMwh;
}

std::vector<PhaseWindow> derive_phases(const Trajectory& trajectory) {
  std::vector<PhaseWindow> windows;
  std::int64_t cursor = trajectory.span_start_ms();
  for (const Step& step : trajectory.steps) {
    if (cursor < step.inference_started_ms) {
      windows.push_back({step.index, Phase::other, cursor, step.inference_started_ms});
      cursor = step.inference_started_ms;
    }
    windows.push_back({step.index, Phase::inference, step.inference_started_ms,
                       step.inference_ended_ms});
    cursor = step.inference_ended_ms;

    std::vector<ToolCallRecord> calls = step.tool_calls;
    std::sort(calls.begin(), calls.end(),
              [](const ToolCallRecord& a, const ToolCallRecord& b) {
                return a.started_ms < b.started_ms;
              });
    for (const ToolCallRecord& tc : calls) {
      const std::int64_t start = std::max(tc.started_ms, cursor);
      if (start > cursor)
        windows.push_back({step.index, Phase::other, cursor, start});
      if (tc.ended_ms > start)
        windows.push_back({step.index, Phase::tool, start, tc.ended_ms});
      cursor = std::max(cursor, tc.ended_ms);
    }
  }
  // Drop zero-width windows (back-to-back events).
  std::erase_if(windows, [](const PhaseWindow& w) { return w.t1_ms <= w.t0_ms; });
  return windows;
}

double EnergyLedger::partial_mwh(int s) const {
  KahanSum sum;
  for (const StepEnergy& e : per_step_mwh)
    if (e.step_index <= s) sum.add(e.total());
  return sum.value();
}

EnergyLedger build_ledger(const RunBundle& bundle, const EnergyConfig& config) {
  const std::vector<PhaseWindow> windows = derive_phases(bundle.trajectory);

  // Component series extracted once; absent samples for a component are
  // treated as that component missing from the trace, not as zero power.
  auto series = [&](const std::string& name) {
    std::vector<TimedPower> out;
    for (const PowerSample& s : bundle.power.samples) {
      auto it = s.component_mw.find(name);
      if (it != s.component_mw.end()) out.push_back({s.t_ms, it->second});
    }
    return out;
  };

  EnergyLedger ledger;
  ledger.run_id = bundle.trajectory.run_id;
  ledger.classifier_cost_mwh = config.classifier_cost_mwh;
  for (const Step& s : bundle.trajectory.steps)
    ledger.per_step_mwh.push_back({s.index, 0.0, 0.0, 0.0});

  auto charge = [&](const PhaseWindow& w, double mwh) {
    StepEnergy& e = ledger.per_step_mwh[static_cast<std::size_t>(w.step_index) - 1];
    switch (w.phase) {
      case Phase::inference: e.inference_mwh += mwh; break;
      case Phase::tool: e.tool_mwh += mwh; break;
      case Phase::other: e.other_mwh += mwh; break;
    }
  };

  for (const std::string& comp : config.gpu_components) {
    const std::vector<TimedPower> pts = series(comp);
    if (pts.empty()) continue;
    for (const PhaseWindow& w : windows)
      charge(w, integrate_power(pts, w.t0_ms, w.t1_ms, config.gap_cap_ms));
  }
  for (const std::string& comp : config.cpu_components) {
    const std::vector<TimedPower> pts = series(comp);
    if (pts.empty()) continue;
    for (const PhaseWindow& w : windows) {
      double mwh = integrate_power(pts, w.t0_ms, w.t1_ms, config.gap_cap_ms);
      if (w.phase != Phase::inference) {
        const double baseline_mwh =
            bundle.baseline_cpu_mw * static_cast<double>(w.t1_ms - w.t0_ms) / kMwMsPerMwh;
        mwh = std::max(0.0, mwh - baseline_mwh);
      }
      charge(w, mwh);
    }
  }

  KahanSum total;
  for (const StepEnergy& e : ledger.per_step_mwh) total.add(e.total());
  ledger.total_mwh = total.value();
  return ledger;
}

double energy_wastage(const std::vector<StopDecision>& runs) {
  KahanSum sum;
  for (const StopDecision& r : runs)
    if (r.outcome == 0) sum.add(r.full_mwh);
  return sum.value();
}

double early_stop_wastage(const std::vector<StopDecision>& runs,
                          double classifier_cost_mwh) {
  KahanSum sum;
  for (const StopDecision& r : runs) {
    if (r.partial_mwh > r.full_mwh)
      throw EnergyError("partial energy exceeds full energy for " + r.run_id);
    if (!r.had_decision && r.stopped)
      throw EnergyError("run stopped without a decision: " + r.run_id);
    if (r.outcome == 0)
      sum.add(r.stopped ? r.partial_mwh : r.full_mwh);
    else if (r.stopped)
      sum.add(r.partial_mwh);
    if (r.had_decision) sum.add(classifier_cost_mwh);
  }
  return sum.value();
}

MetricBundle metrics(const std::vector<StopDecision>& runs,
                     double classifier_cost_mwh) {
  MetricBundle m;
  m.wastage_mwh = energy_wastage(runs);
  m.early_stop_wastage_mwh = early_stop_wastage(runs, classifier_cost_mwh);

  int successes = 0;
  int failures = 0;
  for (const StopDecision& r : runs) {
    if (r.outcome == 1) {
      ++successes;
      r.stopped ? ++m.stopped_successes : ++m.continued_successes;
    } else {
      ++failures;
      r.stopped ? ++m.stopped_failures : ++m.continued_failures;
    }
  }

  if (failures == 0) {
    m.reduction_pct = std::numeric_limits<double>::quiet_NaN();
    m.note = "reduction undefined: no failed runs";
  } else {
    m.reduction_pct = (1.0 - m.early_stop_wastage_mwh / m.wastage_mwh) * 100.0;
  }
  if (successes == 0) {
    m.utility_drop_pct = std::numeric_limits<double>::quiet_NaN();
    m.note = m.note ? *m.note + "; utility drop undefined: no successful runs"
                    : "utility drop undefined: no successful runs";
  } else {
    m.utility_drop_pct =
        100.0 * static_cast<double>(m.stopped_successes) / static_cast<double>(successes);
  }
  return m;
}

void append_ledger_csv(std::ostream& out, const EnergyLedger& ledger) {
  out.precision(12);
  for (const StepEnergy& e : ledger.per_step_mwh) {
    out << ledger.run_id << ',' << e.step_index << ',' << e.inference_mwh
        << ',' << e.tool_mwh << ',' << e.other_mwh << '\n';
  }
  out << ledger.run_id << ",TOTAL," << ledger.total_mwh << ",,\n";
}

}  // namespace tracewatt
