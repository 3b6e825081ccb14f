#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tracewatt {

inline constexpr int kSchemaVersion = 1;

// Malformed or invariant-violating input data. Loader failures always land
// here with a named message; they never escape as parser internals.
class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TokenEvent {
  std::string text;
  double logprob = 0.0;  // natural log, <= 0

  bool operator==(const TokenEvent&) const = default;
};

struct ToolCallRecord {
  std::string name;
  std::int64_t started_ms = 0;
  std::int64_t ended_ms = 0;
  bool is_error = false;
  std::int64_t output_chars = 0;

  bool operator==(const ToolCallRecord&) const = default;
};

struct Step {
  int index = 1;  // 1-based, contiguous within a trajectory
  std::int64_t inference_started_ms = 0;
  std::int64_t inference_ended_ms = 0;
  std::vector<TokenEvent> tokens;
  std::vector<ToolCallRecord> tool_calls;

  bool operator==(const Step&) const = default;
};

struct Trajectory {
  std::string run_id;
  std::string task_id;
  std::vector<Step> steps;
  int outcome = 0;  // 0 failure, 1 success
  bool forced_final = false;

  // Time of the last recorded event (inference end or tool end) in the run.
  std::int64_t span_end_ms() const;
  std::int64_t span_start_ms() const;

  bool operator==(const Trajectory&) const = default;
};

struct PowerSample {
  std::int64_t t_ms = 0;
  std::map<std::string, double> component_mw;

  bool operator==(const PowerSample&) const = default;
};

struct PowerTrace {
  std::string run_id;
  std::int64_t nominal_interval_ms = 100;
  std::vector<PowerSample> samples;

  bool operator==(const PowerTrace&) const = default;
};

struct IngestConfig {
  double baseline_cpu_mw = 0.0;
  // Power samples must cover the trajectory span up to this slack on
  // either side.
  std::int64_t coverage_slack_ms = 1000;
};

struct RunBundle {
  Trajectory trajectory;
  PowerTrace power;
  double baseline_cpu_mw = 0.0;

  bool operator==(const RunBundle&) const = default;
};

// Throw TraceError on any invariant violation.
void validate(const Trajectory& t);
void validate(const PowerTrace& p);
void validate(const RunBundle& b, std::int64_t coverage_slack_ms);

Trajectory load_trace(const std::filesystem::path& path);
PowerTrace load_power(const std::filesystem::path& path);
void save_trace(const Trajectory& t, const std::filesystem::path& path);
void save_power(const PowerTrace& p, const std::filesystem::path& path);

RunBundle load_bundle(const std::filesystem::path& trace_path,
                      const std::filesystem::path& power_path,
                      const IngestConfig& config);

struct ValidationReport {
  int ok = 0;
  int failed = 0;
  // file name -> first error, one entry per failed file
  std::vector<std::pair<std::string, std::string>> errors;
  std::vector<std::string> files;  // every examined trace file, in order
};

// Scans <dir>/<run_id>.trace (+ sibling .power) files. Keeps going past bad
// files; only an unreadable directory throws.
ValidationReport validate_corpus(const std::filesystem::path& dir,
                                 const IngestConfig& config = {});

// Loads every valid bundle in a corpus directory, applying the optional
// labels.csv outcome override. Invalid files throw.
std::vector<RunBundle> load_corpus(const std::filesystem::path& dir,
                                   const IngestConfig& config = {});

// labels.csv: "run_id,outcome" per line (header optional); overrides the
// in-file outcome.
std::map<std::string, int> load_labels(const std::filesystem::path& csv_path);

}  // namespace tracewatt
