#include "tracewatt/trace.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tracewatt {

namespace fs = std::filesystem;
using nlohmann::json;

std::int64_t Trajectory::span_start_ms() const {
  return steps.empty() ? 0 : steps.front().inference_started_ms;
}

std::int64_t Trajectory::span_end_ms() const {
  std::int64_t end = 0;
  for (const auto& s : steps) {
    end = std::max(end, s.inference_ended_ms);
    for (const auto& tc : s.tool_calls) end = std::max(end, tc.ended_ms);
  }
  return end;
}

void validate(const Trajectory& t) {
  if (t.run_id.empty()) throw TraceError("empty run_id");
  if (t.steps.empty()) throw TraceError("trajectory has no steps");
  if (t.outcome != 0 && t.outcome != 1) throw TraceError("outcome must be 0 or 1");
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const Step& s = t.steps[i];
    if (s.index != static_cast<int>(i) + 1)
      throw TraceError("non-contiguous step indices");
    if (s.inference_ended_ms < s.inference_started_ms)
      throw TraceError("step " + std::to_string(s.index) +
                       ": inference ends before it starts");
    for (const auto& tok : s.tokens) {
      if (tok.text.empty()) throw TraceError("empty token text");
      if (tok.logprob > 0.0)
        throw TraceError("positive logprob in step " + std::to_string(s.index));
    }
    for (const auto& tc : s.tool_calls) {
      if (tc.ended_ms < tc.started_ms)
        throw TraceError("tool call ends before it starts");
      if (tc.started_ms < s.inference_ended_ms)
        throw TraceError("tool call precedes inference end in step " +
                         std::to_string(s.index));
      if (tc.output_chars < 0) throw TraceError("negative output_chars");
    }
  }
}

void validate(const PowerTrace& p) {
  if (p.run_id.empty()) throw TraceError("empty run_id in power trace");
  std::int64_t prev = INT64_MIN;
  for (const auto& s : p.samples) {
    if (s.t_ms <= prev) throw TraceError("non-increasing timestamps");
    prev = s.t_ms;
    for (const auto& [name, mw] : s.component_mw) {
      if (mw < 0.0) throw TraceError("negative power for component " + name);
    }
  }
}

void validate(const RunBundle& b, std::int64_t coverage_slack_ms) {
  validate(b.trajectory);
  validate(b.power);
  if (b.trajectory.run_id != b.power.run_id)
    throw TraceError("run_id mismatch between trace and power files");
  if (b.baseline_cpu_mw < 0.0) throw TraceError("negative baseline_cpu_mw");
  if (b.power.samples.empty()) throw TraceError("power trace has no samples");
  const std::int64_t first = b.power.samples.front().t_ms;
  const std::int64_t last = b.power.samples.back().t_ms;
  if (first > b.trajectory.span_start_ms() + coverage_slack_ms ||
      last < b.trajectory.span_end_ms() - coverage_slack_ms)
    throw TraceError("power samples do not cover the trajectory span");
}

namespace {

json parse_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw TraceError("parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

template <typename T>
T require(const json& j, const char* key) {
  if (!j.contains(key)) throw TraceError(std::string("missing field: ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw TraceError(std::string("wrong type for field: ") + key);
  }
}

void check_schema_version(const json& j) {
  const int v = require<int>(j, "schema_version");
  if (v != kSchemaVersion)
    throw TraceError("unsupported schema_version " + std::to_string(v));
}

}  // namespace

Trajectory load_trace(const fs::path& path) {
  const json j = parse_file(path);
  check_schema_version(j);
  Trajectory t;
  t.run_id = require<std::string>(j, "run_id");
  t.task_id = require<std::string>(j, "task_id");
  t.outcome = require<int>(j, "outcome");
  t.forced_final = require<bool>(j, "forced_final");
  for (const auto& js : require<json>(j, "steps")) {
    Step s;
    s.index = require<int>(js, "index");
    s.inference_started_ms = require<std::int64_t>(js, "inference_started_ms");
    s.inference_ended_ms = require<std::int64_t>(js, "inference_ended_ms");
    for (const auto& jt : require<json>(js, "tokens")) {
      TokenEvent tok;
      tok.text = require<std::string>(jt, "text");
      tok.logprob = require<double>(jt, "logprob");
      s.tokens.push_back(std::move(tok));
    }
    for (const auto& jc : require<json>(js, "tool_calls")) {
      ToolCallRecord tc;
      tc.name = require<std::string>(jc, "name");
      tc.started_ms = require<std::int64_t>(jc, "started_ms");
      tc.ended_ms = require<std::int64_t>(jc, "ended_ms");
      tc.is_error = require<bool>(jc, "is_error");
      tc.output_chars = require<std::int64_t>(jc, "output_chars");
      s.tool_calls.push_back(std::move(tc));
    }
    t.steps.push_back(std::move(s));
  }
  validate(t);
  return t;
}

PowerTrace load_power(const fs::path& path) {
  const json j = parse_file(path);
  check_schema_version(j);
  PowerTrace p;
  p.run_id = require<std::string>(j, "run_id");
  p.nominal_interval_ms = require<std::int64_t>(j, "nominal_interval_ms");
  for (const auto& js : require<json>(j, "samples")) {
    PowerSample s;
    s.t_ms = require<std::int64_t>(js, "t_ms");
    const json comps = require<json>(js, "components");
    for (const auto& [name, mw] : comps.items()) {
      if (!mw.is_number()) throw TraceError("non-numeric power value");
      s.component_mw[name] = mw.get<double>();
    }
    p.samples.push_back(std::move(s));
  }
  validate(p);
  return p;
}

void save_trace(const Trajectory& t, const fs::path& path) {
  json steps = json::array();
  for (const auto& s : t.steps) {
    json tokens = json::array();
    for (const auto& tok : s.tokens)
      tokens.push_back({{"text", tok.text}, {"logprob", tok.logprob}});
    json calls = json::array();
    for (const auto& tc : s.tool_calls)
      calls.push_back({{"name", tc.name},
                       {"started_ms", tc.started_ms},
                       {"ended_ms", tc.ended_ms},
                       {"is_error", tc.is_error},
                       {"output_chars", tc.output_chars}});
    steps.push_back({{"index", s.index},
                     {"inference_started_ms", s.inference_started_ms},
                     {"inference_ended_ms", s.inference_ended_ms},
                     {"tokens", std::move(tokens)},
                     {"tool_calls", std::move(calls)}});
  }
  const json j = {{"schema_version", kSchemaVersion},
                  {"run_id", t.run_id},
                  {"task_id", t.task_id},
                  {"outcome", t.outcome},
                  {"forced_final", t.forced_final},
                  {"steps", std::move(steps)}};
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void save_power(const PowerTrace& p, const fs::path& path) {
  json samples = json::array();
  for (const auto& s : p.samples) {
    json comps = json::object();
    for (const auto& [name, mw] : s.component_mw) comps[name] = mw;
    samples.push_back({{"t_ms", s.t_ms}, {"components", std::move(comps)}});
  }
  const json j = {{"schema_version", kSchemaVersion},
                  {"run_id", p.run_id},
                  {"nominal_interval_ms", p.nominal_interval_ms},
                  {"samples", std::move(samples)}};
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

RunBundle load_bundle(const fs::path& trace_path, const fs::path& power_path,
                      const IngestConfig& config) {
  RunBundle b;
  b.trajectory = load_trace(trace_path);
  b.power = load_power(power_path);
  b.baseline_cpu_mw = config.baseline_cpu_mw;
  validate(b, config.coverage_slack_ms);
  return b;
}

std::map<std::string, int> load_labels(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw TraceError("cannot open " + csv_path.string());
  std::map<std::string, int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw TraceError("malformed labels.csv line: " + line);
    const std::string id = line.substr(0, comma);
    const std::string val = line.substr(comma + 1);
    if (id == "run_id") continue;  // header
    if (val != "0" && val != "1")
      throw TraceError("labels.csv outcome must be 0 or 1: " + line);
    labels[id] = val == "1" ? 1 : 0;
  }
  return labels;
}

namespace {

std::vector<fs::path> trace_files(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw TraceError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".trace")
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

ValidationReport validate_corpus(const fs::path& dir, const IngestConfig& config) {
  ValidationReport report;
  std::set<std::string> seen_ids;
  for (const auto& trace_path : trace_files(dir)) {
    report.files.push_back(trace_path.filename().string());
    fs::path power_path = trace_path;
    power_path.replace_extension(".power");
    try {
      const RunBundle b = load_bundle(trace_path, power_path, config);
      if (!seen_ids.insert(b.trajectory.run_id).second)
        throw TraceError("duplicate run_id: " + b.trajectory.run_id);
      ++report.ok;
    } catch (const TraceError& e) {
      ++report.failed;
      report.errors.emplace_back(trace_path.filename().string(), e.what());
    }
  }
  return report;
}

std::vector<RunBundle> load_corpus(const fs::path& dir, const IngestConfig& config) {
  std::map<std::string, int> labels;
  if (fs::exists(dir / "labels.csv")) labels = load_labels(dir / "labels.csv");
  std::vector<RunBundle> bundles;
  std::set<std::string> seen_ids;
  for (const auto& trace_path : trace_files(dir)) {
    fs::path power_path = trace_path;
    power_path.replace_extension(".power");
    RunBundle b = load_bundle(trace_path, power_path, config);
    if (!seen_ids.insert(b.trajectory.run_id).second)
      throw TraceError("duplicate run_id: " + b.trajectory.run_id);
    if (auto it = labels.find(b.trajectory.run_id); it != labels.end())
      b.trajectory.outcome = it->second;
    bundles.push_back(std::move(b));
  }
  return bundles;
}

}  // namespace tracewatt
