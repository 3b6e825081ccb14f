#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tracewatt/synth.hpp"
#include "tracewatt/trace.hpp"

using namespace tracewatt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tracewatt_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Trajectory minimal_trajectory() {
  Trajectory t;
  t.run_id = "r1";
  t.task_id = "task";
  t.outcome = 1;
  Step s;
  s.index = 1;
  s.inference_started_ms = 0;
  s.inference_ended_ms = 1000;
  s.tokens = {{"hello", -0.5}};
  t.steps.push_back(s);
  return t;
}

PowerTrace minimal_power() {
  PowerTrace p;
  p.run_id = "r1";
  p.nominal_interval_ms = 500;
  p.samples = {{0, {{"cpu", 100.0}}}, {500, {{"cpu", 100.0}}}, {1000, {{"cpu", 100.0}}}};
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("minimal valid bundle loads") {
  const fs::path dir = temp_dir("minimal");
  save_trace(minimal_trajectory(), dir / "r1.trace");
  save_power(minimal_power(), dir / "r1.power");
  const RunBundle b = load_bundle(dir / "r1.trace", dir / "r1.power", {});
  CHECK(b.trajectory.steps.size() == 1);
  CHECK(b.power.samples.size() == 3);
}

TEST_CASE("non-contiguous step indices rejected") {
  Trajectory t = minimal_trajectory();
  Step s2 = t.steps[0];
  s2.index = 3;
  s2.inference_started_ms = 1000;
  s2.inference_ended_ms = 2000;
  t.steps.push_back(s2);
  CHECK_THROWS_WITH_AS(validate(t), "non-contiguous step indices", TraceError);
}

TEST_CASE("non-increasing power timestamps rejected") {
  PowerTrace p = minimal_power();
  p.samples[2].t_ms = 500;
  CHECK_THROWS_WITH_AS(validate(p), "non-increasing timestamps", TraceError);
}

TEST_CASE("positive logprob rejected, zero legal") {
  Trajectory t = minimal_trajectory();
  t.steps[0].tokens[0].logprob = 0.0;
  CHECK_NOTHROW(validate(t));
  t.steps[0].tokens[0].logprob = 0.1;
  CHECK_THROWS_AS(validate(t), TraceError);
}

TEST_CASE("tool call before inference end rejected") {
  Trajectory t = minimal_trajectory();
  t.steps[0].tool_calls = {{"bash", 500, 1500, false, 10}};
  CHECK_THROWS_AS(validate(t), TraceError);
  t.steps[0].tool_calls[0].started_ms = 1000;
  CHECK_NOTHROW(validate(t));
}

TEST_CASE("run_id mismatch between files") {
  const fs::path dir = temp_dir("mismatch");
  save_trace(minimal_trajectory(), dir / "r1.trace");
  PowerTrace p = minimal_power();
  p.run_id = "other";
  save_power(p, dir / "r1.power");
  CHECK_THROWS_AS(load_bundle(dir / "r1.trace", dir / "r1.power", {}), TraceError);
}

TEST_CASE("power coverage enforced with slack") {
  const fs::path dir = temp_dir("coverage");
  Trajectory t = minimal_trajectory();
  t.steps[0].inference_ended_ms = 60000;
  save_trace(t, dir / "r1.trace");
  save_power(minimal_power(), dir / "r1.power");  // ends at 1000 ms
  CHECK_THROWS_AS(load_bundle(dir / "r1.trace", dir / "r1.power", {}), TraceError);
  IngestConfig cfg;
  cfg.coverage_slack_ms = 100000;
  CHECK_NOTHROW(load_bundle(dir / "r1.trace", dir / "r1.power", cfg));
}

TEST_CASE("validate_corpus counts ok and failed files") {
  const fs::path dir = temp_dir("corpus");
  save_trace(minimal_trajectory(), dir / "r1.trace");
  save_power(minimal_power(), dir / "r1.power");
  Trajectory t2 = minimal_trajectory();
  t2.run_id = "r2";
  PowerTrace p2 = minimal_power();
  p2.run_id = "r2";
  save_trace(t2, dir / "r2.trace");
  save_power(p2, dir / "r2.power");
  std::ofstream(dir / "r3.trace") << "{not json";
  std::ofstream(dir / "r3.power") << "{}";

  const ValidationReport report = validate_corpus(dir);
  CHECK(report.ok == 2);
  CHECK(report.failed == 1);
  REQUIRE(report.errors.size() == 1);
  CHECK(report.errors[0].first == "r3.trace");
  CHECK(report.files.size() == 3);
}

TEST_CASE("validate_corpus: empty dir") {
  const fs::path dir = temp_dir("empty");
  const ValidationReport report = validate_corpus(dir);
  CHECK(report.ok == 0);
  CHECK(report.failed == 0);
}

TEST_CASE("duplicate run_id across files flagged") {
  const fs::path dir = temp_dir("dup");
  save_trace(minimal_trajectory(), dir / "a.trace");
  save_power(minimal_power(), dir / "a.power");
  save_trace(minimal_trajectory(), dir / "b.trace");
  save_power(minimal_power(), dir / "b.power");
  const ValidationReport report = validate_corpus(dir);
  CHECK(report.ok == 1);
  CHECK(report.failed == 1);
  CHECK(report.errors[0].second == "duplicate run_id: r1");
}

TEST_CASE("round-trip preserves bundles exactly") {
  const fs::path dir = temp_dir("roundtrip");
  SynthSpec spec;
  spec.n = 5;
  for (int i = 0; i < spec.n; ++i) {
    const RunBundle b = synthesize_run(spec, 7, i);
    save_trace(b.trajectory, dir / "x.trace");
    save_power(b.power, dir / "x.power");
    CHECK(load_trace(dir / "x.trace") == b.trajectory);
    CHECK(load_power(dir / "x.power") == b.power);
  }
}

TEST_CASE("generator determinism: identical bytes for identical (spec, seed)") {
  SynthSpec spec;
  spec.n = 4;
  const fs::path d1 = temp_dir("gen1");
  const fs::path d2 = temp_dir("gen2");
  synthesize_corpus(spec, 123, d1);
  synthesize_corpus(spec, 123, d2);
  for (const auto& entry : fs::directory_iterator(d1)) {
    CHECK(slurp(entry.path()) == slurp(d2 / entry.path().filename()));
  }
  // different seed produces different bytes somewhere
  const fs::path d3 = temp_dir("gen3");
  synthesize_corpus(spec, 124, d3);
  bool any_diff = false;
  for (const auto& entry : fs::directory_iterator(d1))
    any_diff |= slurp(entry.path()) != slurp(d3 / entry.path().filename());
  CHECK(any_diff);
}

TEST_CASE("labels.csv overrides in-file outcome") {
  const fs::path dir = temp_dir("labels");
  SynthSpec spec;
  spec.n = 3;
  synthesize_corpus(spec, 9, dir);
  auto bundles = load_corpus(dir);
  const std::string id = bundles[0].trajectory.run_id;
  const int flipped = 1 - bundles[0].trajectory.outcome;
  std::ofstream(dir / "labels.csv") << "run_id,outcome\n" << id << "," << flipped << "\n";
  bundles = load_corpus(dir);
  CHECK(bundles[0].trajectory.outcome == flipped);
}

TEST_CASE("generated corpora separate classes by construction") {
  SynthSpec spec;
  spec.n = 30;
  int fail_steps = 0, fail_count = 0, succ_steps = 0, succ_count = 0;
  for (int i = 0; i < spec.n; ++i) {
    const RunBundle b = synthesize_run(spec, 42, i);
    if (b.trajectory.outcome == 0) {
      fail_steps += static_cast<int>(b.trajectory.steps.size());
      ++fail_count;
    } else {
      succ_steps += static_cast<int>(b.trajectory.steps.size());
      ++succ_count;
    }
  }
  REQUIRE(fail_count > 0);
  REQUIRE(succ_count > 0);
  CHECK(static_cast<double>(fail_steps) / fail_count >
        static_cast<double>(succ_steps) / succ_count);
}
