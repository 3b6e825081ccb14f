#include "tracewatt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tracewatt/rng.hpp"

namespace tracewatt {

namespace fs = std::filesystem;

namespace {

std::string run_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "run_%05d", index);
  return buf;
}

double round_mw(double v) { return std::round(std::max(v, 0.0) * 10.0) / 10.0; }

double round_lp(double v) { return std::round(std::min(v, 0.0) * 1e6) / 1e6; }

}  // namespace

RunBundle synthesize_run(const SynthSpec& spec, std::uint64_t seed, int index) {
  Rng rng(derive_seed(seed, "run", static_cast<std::uint64_t>(index)));

  Trajectory traj;
  traj.run_id = run_name(index);
  traj.task_id = "task_" + std::to_string(index % 20);
  traj.outcome = rng.bernoulli(spec.success_rate) ? 1 : 0;
  const bool failed = traj.outcome == 0;
  const int n_steps =
      static_cast<int>(failed ? rng.uniform_int(spec.failure_steps_min, spec.failure_steps_max)
                              : rng.uniform_int(spec.success_steps_min, spec.success_steps_max));
  traj.forced_final = failed && rng.bernoulli(0.3);

  // Every class-correlated trace artifact scales with the planted shift, so
  // a zero-shift corpus carries no learnable signal at any step prefix.
  const double sig = std::clamp(spec.logprob_shift / 1.5, 0.0, 1.0);

  std::int64_t t = 0;
  std::vector<std::string> prev_tokens;
  for (int si = 1; si <= n_steps; ++si) {
    Step step;
    step.index = si;
    int n_tokens = static_cast<int>(rng.uniform_int(spec.tokens_min, spec.tokens_max));
    if (failed) n_tokens += static_cast<int>(sig * static_cast<double>(rng.uniform_int(0, 20)));

    // Failed runs occasionally loop: reuse a chunk of the previous step.
    std::vector<std::string> texts;
    if (failed && !prev_tokens.empty() && rng.bernoulli(0.35 * sig)) {
      const int take = std::min<int>(n_tokens, static_cast<int>(prev_tokens.size()));
      texts.assign(prev_tokens.begin(), prev_tokens.begin() + take);
    }
    while (static_cast<int>(texts.size()) < n_tokens)
      texts.push_back("tok" + std::to_string(rng.uniform_int(0, spec.vocab_size - 1)));

    // Per-step tail depth: failures sink the low-confidence tail by up to
    // logprob_shift, with enough per-step variance that a single step is a
    // weak signal on its own.
    const double tail_depth =
        failed ? spec.logprob_shift * rng.canonical()
               : spec.logprob_shift * 0.1 * rng.canonical();
    const int tail_size = static_cast<int>(rng.uniform_int(8, 14));
    for (int ti = 0; ti < n_tokens; ++ti) {
      TokenEvent tok;
      tok.text = texts[ti];
      double lp = -std::abs(rng.normal(0.0, 0.25));
      if (ti < tail_size) lp -= tail_depth * rng.canonical();
      tok.logprob = round_lp(lp);
      step.tokens.push_back(std::move(tok));
    }
    // Tail positions should not correlate with sequence order.
    rng.shuffle(step.tokens);

    step.inference_started_ms = t;
    step.inference_ended_ms = t + n_tokens * spec.ms_per_token;
    t = step.inference_ended_ms;

    ToolCallRecord tc;
    tc.name = rng.bernoulli(0.5) ? "search" : "bash";
    tc.started_ms = t;
    tc.ended_ms = t + rng.uniform_int(500, 2000);
    tc.is_error = failed && rng.bernoulli(0.2);
    tc.output_chars = rng.uniform_int(0, 4000);
    t = tc.ended_ms;
    step.tool_calls.push_back(std::move(tc));

    prev_tokens = std::move(texts);
    traj.steps.push_back(std::move(step));
  }

  PowerTrace power;
  power.run_id = traj.run_id;
  power.nominal_interval_ms = 100;
  const std::int64_t span_end = traj.span_end_ms();
  std::size_t step_i = 0;
  for (std::int64_t ts = 0; ts <= span_end; ts += power.nominal_interval_ms) {
    while (step_i + 1 < traj.steps.size() &&
           ts >= traj.steps[step_i + 1].inference_started_ms)
      ++step_i;
    const Step& cur = traj.steps[step_i];
    const bool inference =
        ts >= cur.inference_started_ms && ts < cur.inference_ended_ms;
    PowerSample s;
    s.t_ms = ts;
    s.component_mw["gpu"] =
        round_mw(inference ? rng.normal(spec.gpu_inference_mw, 400.0)
                           : rng.normal(200.0, 40.0));
    s.component_mw["cpu"] =
        round_mw(inference ? rng.normal(spec.cpu_idle_mw, 60.0)
                           : rng.normal(spec.cpu_active_mw, 100.0));
    power.samples.push_back(std::move(s));
  }

  RunBundle bundle;
  bundle.trajectory = std::move(traj);
  bundle.power = std::move(power);
  bundle.baseline_cpu_mw = 500.0;
  return bundle;
}

std::vector<std::string> synthesize_corpus(const SynthSpec& spec,
                                           std::uint64_t seed,
                                           const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw TraceError("cannot create output directory: " + out_dir.string());
  std::vector<std::string> ids;
  for (int i = 0; i < spec.n; ++i) {
    const RunBundle bundle = synthesize_run(spec, seed, i);
    const std::string& id = bundle.trajectory.run_id;
    save_trace(bundle.trajectory, out_dir / (id + ".trace"));
    save_power(bundle.power, out_dir / (id + ".power"));
    ids.push_back(id);
  }
  return ids;
}

}  // namespace tracewatt
