#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tracewatt/trace.hpp"

namespace tracewatt {

// Settings for the labeled fixture generator. Failed runs take more steps
// and carry deeper logprob tails; the planted separation grows with
// logprob_shift (0 means the classes are indistinguishable).
struct SynthSpec {
  int n = 200;
  double success_rate = 0.5;
  double logprob_shift = 1.5;
  int success_steps_min = 3;
  int success_steps_max = 6;
  int failure_steps_min = 6;
  int failure_steps_max = 10;
  int tokens_min = 20;
  int tokens_max = 60;
  int vocab_size = 50;
  std::int64_t ms_per_token = 50;
  double gpu_inference_mw = 8000.0;
  double cpu_active_mw = 1500.0;
  double cpu_idle_mw = 800.0;
};

// Deterministic for a fixed (spec, seed): identical corpus bytes on rerun.
// Writes <dir>/<run_id>.trace and <dir>/<run_id>.power; returns run ids in
// generation order.
std::vector<std::string> synthesize_corpus(const SynthSpec& spec,
                                           std::uint64_t seed,
                                           const std::filesystem::path& out_dir);

// One generated run, exposed for tests that need bundles without disk IO.
RunBundle synthesize_run(const SynthSpec& spec, std::uint64_t seed, int index);

}  // namespace tracewatt
