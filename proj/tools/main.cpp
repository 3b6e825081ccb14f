// tracewatt command-line surface: validate -> energy -> featurize -> train ->
// sweep -> report, driven by one JSON config file. Every flag mirrors a
// config key and overrides it. Exit codes: 0 success, 1 data/model failure,
// 2 configuration failure.
#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tracewatt/energy.hpp"
#include "tracewatt/features.hpp"
#include "tracewatt/gbdt.hpp"
#include "tracewatt/model_selection.hpp"
#include "tracewatt/rng.hpp"
#include "tracewatt/simulate.hpp"
#include "tracewatt/synth.hpp"
#include "tracewatt/trace.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tracewatt;

namespace {

constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  fs::path corpus_dir;
  fs::path output_dir = "out";
  std::optional<std::uint64_t> seed;  // mandatory: no wall-clock seeding

  FeatureConfig feature;  // .step comes from --step at command level
  EnergyConfig energy;
  IngestConfig ingest;

  int outer_k = 5;
  int inner_k = 3;
  int threads = 1;
  HalvingConfig halving;

  std::vector<int> decision_steps = {1, 2, 3};
  std::optional<int> cutoff_step;
  std::vector<double> taus;     // classifier thresholds
  std::vector<double> p_stops;  // random-baseline stop probabilities

  SynthSpec synth;

  std::uint64_t config_hash = 0;  // of the effective (post-override) config
};

std::vector<double> default_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 19; ++i) g.push_back(i * 0.05);
  return g;
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig load_config(const fs::path& path) {
  RunConfig c;
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config parse: ") + e.what());
    }
  }
  try {
    std::string s;
    read_key(j, "corpus_dir", s);
    if (!s.empty()) c.corpus_dir = s;
    s.clear();
    read_key(j, "output_dir", s);
    if (!s.empty()) c.output_dir = s;
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("feature")) {
      const json& f = j.at("feature");
      read_key(f, "k", c.feature.k);
      read_key(f, "max_lcs_tokens", c.feature.max_lcs_tokens);
    }
    if (j.contains("energy")) {
      const json& e = j.at("energy");
      read_key(e, "gap_cap_ms", c.energy.gap_cap_ms);
      read_key(e, "classifier_cost_mwh", c.energy.classifier_cost_mwh);
      read_key(e, "gpu_components", c.energy.gpu_components);
      read_key(e, "cpu_components", c.energy.cpu_components);
      read_key(e, "baseline_cpu_mw", c.ingest.baseline_cpu_mw);
      read_key(e, "coverage_slack_ms", c.ingest.coverage_slack_ms);
    }
    if (j.contains("selection")) {
      const json& s2 = j.at("selection");
      read_key(s2, "outer_k", c.outer_k);
      read_key(s2, "inner_k", c.inner_k);
      read_key(s2, "threads", c.threads);
      read_key(s2, "n_candidates", c.halving.n_candidates);
      read_key(s2, "min_rounds", c.halving.min_rounds);
      read_key(s2, "factor", c.halving.factor);
      read_key(s2, "max_rounds", c.halving.max_rounds);
    }
    if (j.contains("simulate")) {
      const json& s3 = j.at("simulate");
      read_key(s3, "decision_steps", c.decision_steps);
      if (s3.contains("cutoff_step") && !s3.at("cutoff_step").is_null())
        c.cutoff_step = s3.at("cutoff_step").get<int>();
      read_key(s3, "thresholds", c.taus);
      read_key(s3, "p_stops", c.p_stops);
    }
    if (j.contains("synth")) {
      const json& s4 = j.at("synth");
      read_key(s4, "n", c.synth.n);
      read_key(s4, "success_rate", c.synth.success_rate);
      read_key(s4, "logprob_shift", c.synth.logprob_shift);
      read_key(s4, "tokens_min", c.synth.tokens_min);
      read_key(s4, "tokens_max", c.synth.tokens_max);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.taus.empty()) c.taus = default_grid();
  if (c.p_stops.empty()) c.p_stops = default_grid();
  return c;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Canonical serialization of the effective config; its hash ties every CSV
// back to the exact settings that produced it.
std::uint64_t hash_config(const RunConfig& c) {
  // Deliberately excludes output_dir and threads: neither changes what is
  // computed, only where it lands and how fast.
  json j;
  j["corpus_dir"] = c.corpus_dir.string();
  j["seed"] = c.seed.value_or(0);
  j["feature"] = {{"k", c.feature.k}, {"max_lcs_tokens", c.feature.max_lcs_tokens}};
  j["energy"] = {{"gap_cap_ms", c.energy.gap_cap_ms},
                 {"classifier_cost_mwh", c.energy.classifier_cost_mwh},
                 {"gpu_components", c.energy.gpu_components},
                 {"cpu_components", c.energy.cpu_components},
                 {"baseline_cpu_mw", c.ingest.baseline_cpu_mw},
                 {"coverage_slack_ms", c.ingest.coverage_slack_ms}};
  j["selection"] = {{"outer_k", c.outer_k},       {"inner_k", c.inner_k},
                    {"n_candidates", c.halving.n_candidates},
                    {"min_rounds", c.halving.min_rounds},
                    {"factor", c.halving.factor}, {"max_rounds", c.halving.max_rounds}};
  j["simulate"] = {{"decision_steps", c.decision_steps},
                   {"thresholds", c.taus},
                   {"p_stops", c.p_stops}};
  if (c.cutoff_step) j["simulate"]["cutoff_step"] = *c.cutoff_step;
  j["synth"] = {{"n", c.synth.n},
                {"success_rate", c.synth.success_rate},
                {"logprob_shift", c.synth.logprob_shift}};
  return fnv1a64(j.dump());
}

void write_footer(std::ostream& out, const RunConfig& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, c.config_hash);
  out << "# tracewatt " << kVersion << " config " << buf << "\n";
}

std::ofstream open_out(const RunConfig& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  std::ofstream out(c.output_dir / name);
  if (!out) throw ConfigError("cannot write " + (c.output_dir / name).string());
  return out;
}

void require_corpus(const RunConfig& c) {
  if (c.corpus_dir.empty() || !fs::is_directory(c.corpus_dir))
    throw ConfigError("corpus_dir does not exist: " + c.corpus_dir.string());
}

std::uint64_t require_seed(const RunConfig& c) {
  if (!c.seed) throw ConfigError("seed is mandatory (config key or --seed)");
  return *c.seed;
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& c) {
  const std::uint64_t seed = require_seed(c);
  if (c.corpus_dir.empty()) throw ConfigError("corpus_dir required for synth");
  fs::create_directories(c.corpus_dir);
  const auto ids = synthesize_corpus(c.synth, seed, c.corpus_dir);
  std::cout << "wrote " << ids.size() << " runs to " << c.corpus_dir.string() << "\n";
  return 0;
}

int cmd_validate(const RunConfig& c) {
  require_corpus(c);
  const ValidationReport report = validate_corpus(c.corpus_dir, c.ingest);
  std::map<std::string, std::string> errors(report.errors.begin(),
                                            report.errors.end());
  auto out = open_out(c, "validation.csv");
  out << "file,status,error\n";
  for (const std::string& f : report.files) {
    const auto it = errors.find(f);
    out << f << "," << (it == errors.end() ? "ok" : "failed") << ","
        << (it == errors.end() ? "" : it->second) << "\n";
  }
  write_footer(out, c);
  std::cout << report.ok << " ok, " << report.failed << " failed\n";
  for (const auto& [file, err] : report.errors)
    std::cout << "  " << file << ": " << err << "\n";
  return report.failed == 0 ? 0 : 1;
}

std::vector<RunBundle> load_all(const RunConfig& c) {
  require_corpus(c);
  std::vector<RunBundle> bundles = load_corpus(c.corpus_dir, c.ingest);
  if (bundles.empty()) throw TraceError("corpus is empty");
  return bundles;
}

int cmd_energy(const RunConfig& c) {
  const std::vector<RunBundle> bundles = load_all(c);
  auto ledger_csv = open_out(c, "ledgers.csv");
  ledger_csv << kLedgerCsvHeader << "\n";
  double sum_mwh[2] = {0.0, 0.0};
  int count[2] = {0, 0};
  for (const RunBundle& b : bundles) {
    const EnergyLedger ledger = build_ledger(b, c.energy);
    append_ledger_csv(ledger_csv, ledger);
    sum_mwh[b.trajectory.outcome] += ledger.total_mwh;
    ++count[b.trajectory.outcome];
  }
  write_footer(ledger_csv, c);

  auto summary = open_out(c, "energy_summary.csv");
  summary << "outcome,count,mean_full_mwh\n";
  for (int cls = 0; cls <= 1; ++cls) {
    summary << (cls == 0 ? "failure" : "success") << "," << count[cls] << ","
            << fmt(count[cls] ? sum_mwh[cls] / count[cls] : 0.0) << "\n";
  }
  write_footer(summary, c);
  std::cout << "ledgers.csv and energy_summary.csv written for "
            << bundles.size() << " runs\n";
  return 0;
}

std::vector<Trajectory> trajectories_of(const std::vector<RunBundle>& bundles) {
  std::vector<Trajectory> out;
  for (const RunBundle& b : bundles) out.push_back(b.trajectory);
  return out;
}

int cmd_featurize(const RunConfig& c, int step) {
  const std::vector<RunBundle> bundles = load_all(c);
  FeatureConfig fc = c.feature;
  fc.step = step;
  const FeatureMatrix m = build_matrix(trajectories_of(bundles), fc);
  auto out = open_out(c, "features_step" + std::to_string(step) + ".csv");
  out << "run_id,outcome";
  for (const std::string& n : m.names) out << "," << n;
  out << "\n";
  for (Eigen::Index r = 0; r < m.x.rows(); ++r) {
    out << m.run_ids[static_cast<std::size_t>(r)] << "," << m.y[r];
    for (Eigen::Index col = 0; col < m.x.cols(); ++col) out << "," << fmt(m.x(r, col));
    out << "\n";
  }
  write_footer(out, c);
  std::cout << m.x.rows() << " eligible rows, " << m.ineligible.size()
            << " ineligible\n";
  return 0;
}

struct TrainedStep {
  FeatureMatrix matrix;
  NestedCVResult cv;
  std::uint64_t step_seed = 0;
};

TrainedStep run_nested_cv(const RunConfig& c, const std::vector<RunBundle>& bundles,
                          int step) {
  TrainedStep t;
  FeatureConfig fc = c.feature;
  fc.step = step;
  t.matrix = build_matrix(trajectories_of(bundles), fc);
  t.step_seed = derive_seed(require_seed(c), "step", static_cast<std::uint64_t>(step));
  t.cv = nested_cv(t.matrix.x, t.matrix.y, c.outer_k, c.inner_k, t.step_seed,
                   SearchSpace{}, c.halving, c.threads);
  return t;
}

void write_cv_report(const RunConfig& c, const TrainedStep& t, int step) {
  auto report = open_out(c, "cv_report_step" + std::to_string(step) + ".csv");
  report << "fold,auc,rounds,max_depth,learning_rate,min_child_weight,subsample,"
            "colsample,gamma\n";
  for (const OuterFoldResult& f : t.cv.report.per_outer_fold) {
    const HyperParams& p = f.best_params;
    report << f.fold << "," << fmt(f.auc) << "," << f.rounds_used << ","
           << p.max_depth << "," << fmt(p.learning_rate) << ","
           << fmt(p.min_child_weight) << "," << fmt(p.subsample) << ","
           << fmt(p.colsample) << "," << fmt(p.gamma) << "\n";
  }
  report << "mean," << fmt(t.cv.report.mean_auc) << ",,,,,,,\n";
  report << "ci95_halfwidth," << fmt(t.cv.report.ci95_halfwidth) << ",,,,,,,\n";
  write_footer(report, c);

  auto oof = open_out(c, "oof_step" + std::to_string(step) + ".csv");
  oof << "run_id,outcome,score,fold\n";
  for (std::size_t i = 0; i < t.cv.report.oof_scores.size(); ++i) {
    oof << t.matrix.run_ids[i] << "," << t.matrix.y[static_cast<Eigen::Index>(i)]
        << "," << fmt(t.cv.report.oof_scores[i]) << "," << t.cv.report.oof_fold[i]
        << "\n";
  }
  write_footer(oof, c);
}

int cmd_train(const RunConfig& c, int step) {
  const std::vector<RunBundle> bundles = load_all(c);
  const TrainedStep t = run_nested_cv(c, bundles, step);
  write_cv_report(c, t, step);

  const FinalModel fm =
      train_final(t.matrix.x, t.matrix.y, c.inner_k,
                  derive_seed(t.step_seed, "final"), SearchSpace{}, c.halving,
                  t.matrix.names);
  fs::create_directories(c.output_dir);
  save_model(fm.model, c.output_dir / ("model_step" + std::to_string(step) + ".json"));
  std::cout << "mean AUC " << fmt(t.cv.report.mean_auc) << " +/- "
            << fmt(t.cv.report.ci95_halfwidth) << "; model_step" << step
            << ".json written\n";
  return 0;
}

// Quantile grid of a per-run statistic, used as the logprob-baseline
// threshold ladder. Deterministic in the data alone.
std::vector<double> quantile_grid(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  if (values.empty()) return out;
  for (int i = 1; i <= 19; ++i) {
    const double q = i * 0.05;
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    out.push_back(values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> step_statistic(const std::vector<RunBundle>& bundles, int step,
                                   bool use_min) {
  std::vector<double> stats;
  for (const RunBundle& b : bundles) {
    if (static_cast<int>(b.trajectory.steps.size()) < step) continue;
    const Step& s = b.trajectory.steps[static_cast<std::size_t>(step) - 1];
    if (s.tokens.empty()) continue;
    double lo = s.tokens[0].logprob, sum = 0.0;
    for (const TokenEvent& tok : s.tokens) {
      lo = std::min(lo, tok.logprob);
      sum += tok.logprob;
    }
    stats.push_back(use_min ? lo : sum / static_cast<double>(s.tokens.size()));
  }
  return stats;
}

void write_svg(const RunConfig& c, const std::string& name,
               const std::vector<std::pair<std::string, std::vector<ComparisonRow>>>& curves) {
  const double w = 640, h = 480, ml = 60, mb = 50, mt = 20, mr = 20;
  double rmin = 0, rmax = 1;
  for (const auto& [_, rows] : curves)
    for (const ComparisonRow& r : rows) {
      if (std::isnan(r.reduction_pct) || std::isnan(r.drop_pct)) continue;
      rmin = std::min(rmin, r.reduction_pct);
      rmax = std::max(rmax, r.reduction_pct);
    }
  const auto sx = [&](double drop) { return ml + drop / 100.0 * (w - ml - mr); };
  const auto sy = [&](double red) {
    return h - mb - (red - rmin) / (rmax - rmin) * (h - mb - mt);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  auto out = open_out(c, name);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='"
      << h - mb << "' stroke='black'/>\n"
      << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n"
      << "<text x='" << w / 2 << "' y='" << h - 12
      << "' text-anchor='middle'>utility drop (%)</text>\n"
      << "<text x='16' y='" << h / 2 << "' transform='rotate(-90 16 " << h / 2
      << ")' text-anchor='middle'>wastage reduction (%)</text>\n";
  int ci = 0;
  for (const auto& [policy, rows] : curves) {
    std::vector<ComparisonRow> pts = rows;
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
      return a.drop_pct < b.drop_pct;
    });
    out << "<polyline fill='none' stroke='" << colors[ci % 4] << "' points='";
    for (const ComparisonRow& r : pts) {
      if (std::isnan(r.reduction_pct) || std::isnan(r.drop_pct)) continue;
      out << fmt(sx(r.drop_pct)) << "," << fmt(sy(r.reduction_pct)) << " ";
    }
    out << "'/>\n<text x='" << w - mr - 150 << "' y='" << mt + 16 * (ci + 1)
        << "' fill='" << colors[ci % 4] << "'>" << policy << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
}

int cmd_sweep(const RunConfig& c, bool plot) {
  const std::vector<RunBundle> bundles = load_all(c);
  std::vector<EnergyLedger> ledgers;
  ledgers.reserve(bundles.size());
  for (const RunBundle& b : bundles) ledgers.push_back(build_ledger(b, c.energy));
  std::vector<SimRun> corpus;
  for (std::size_t i = 0; i < bundles.size(); ++i)
    corpus.push_back({&bundles[i].trajectory, &ledgers[i]});

  const std::uint64_t seed = require_seed(c);
  for (int step : c.decision_steps) {
    const TrainedStep t = run_nested_cv(c, bundles, step);
    write_cv_report(c, t, step);

    Policy cls;
    cls.kind = PolicyKind::classifier;
    for (std::size_t i = 0; i < t.matrix.run_ids.size(); ++i)
      cls.success_proba[t.matrix.run_ids[i]] = t.cv.report.oof_scores[i];
    Policy rnd;
    rnd.kind = PolicyKind::random;
    rnd.seed = derive_seed(seed, "random_policy", static_cast<std::uint64_t>(step));
    Policy minlp;
    minlp.kind = PolicyKind::min_logprob;
    Policy meanlp;
    meanlp.kind = PolicyKind::mean_logprob;

    SimulationConfig sim;
    sim.decision_step = step;
    sim.cutoff_step = c.cutoff_step;
    sim.classifier_cost_mwh = c.energy.classifier_cost_mwh;

    const Comparison cmp = compare(
        corpus,
        {{cls, c.taus},
         {rnd, c.p_stops},
         {minlp, quantile_grid(step_statistic(bundles, step, true))},
         {meanlp, quantile_grid(step_statistic(bundles, step, false))}},
        sim);

    const std::string suffix = "_step" + std::to_string(step);
    auto curve = open_out(c, "curves" + suffix + ".csv");
    curve << "policy,threshold,reduction_pct,drop_pct,stopped_failures,"
             "stopped_successes\n";
    for (const ComparisonRow& r : cmp.rows) {
      curve << r.policy << "," << fmt(r.threshold) << "," << fmt(r.reduction_pct)
            << "," << fmt(r.drop_pct) << "," << r.stopped_failures << ","
            << r.stopped_successes << "\n";
    }
    write_footer(curve, c);

    auto log = open_out(c, "decisions" + suffix + ".csv");
    log << "policy,threshold,run_id,outcome,had_decision,stopped,full_mwh,"
           "partial_mwh\n";
    for (const SimulationResult& r : cmp.results) {
      for (const StopDecision& d : r.decision_log) {
        log << r.policy_name << "," << fmt(r.threshold) << "," << d.run_id << ","
            << d.outcome << "," << d.had_decision << "," << d.stopped << ","
            << fmt(d.full_mwh) << "," << fmt(d.partial_mwh) << "\n";
      }
    }
    write_footer(log, c);

    std::map<std::string, std::vector<SimulationResult>> by_policy;
    std::map<std::string, std::vector<ComparisonRow>> rows_by_policy;
    for (const SimulationResult& r : cmp.results)
      by_policy[r.policy_name].push_back(r);
    for (const ComparisonRow& r : cmp.rows) rows_by_policy[r.policy].push_back(r);

    auto dom = open_out(c, "dominance" + suffix + ".csv");
    dom << "baseline,classifier_dominance_fraction\n";
    for (const char* baseline : {"random", "min_logprob", "mean_logprob"}) {
      dom << baseline << ","
          << fmt(dominance_fraction(by_policy.at("classifier"), by_policy.at(baseline)))
          << "\n";
    }
    write_footer(dom, c);

    if (plot) {
      std::vector<std::pair<std::string, std::vector<ComparisonRow>>> curves(
          rows_by_policy.begin(), rows_by_policy.end());
      write_svg(c, "curves" + suffix + ".svg", curves);
    }
    std::cout << "step " << step << ": mean AUC " << fmt(t.cv.report.mean_auc)
              << ", " << cmp.rows.size() << " curve points\n";
  }
  return 0;
}

// Recover (s, k) from an artifact's column names; the layout is
// s*(k+1) + (s-1) with names s{i}_tail{0j} / s{i}_tokens / ov_{i-1}_{i}.
FeatureConfig layout_of(const BoostedModel& model, const RunConfig& c) {
  FeatureConfig fc = c.feature;
  int step = 0, k = 0;
  for (const std::string& n : model.feature_names) {
    if (n.rfind("s1_tail", 0) == 0) ++k;
    if (n.size() > 7 && n.compare(n.size() - 7, 7, "_tokens") == 0)
      step = std::max(step, std::stoi(n.substr(1, n.size() - 8)));
  }
  if (step == 0 || k == 0 ||
      feature_vector_length(step, k) != model.feature_count)
    throw ModelError("model artifact has no recognizable feature layout");
  fc.step = step;
  fc.k = k;
  return fc;
}

int cmd_importance(const RunConfig& c, const fs::path& model_path) {
  const BoostedModel model = load_model(model_path);
  const FeatureConfig fc = layout_of(model, c);
  const std::vector<RunBundle> bundles = load_all(c);
  FeatureConfig with_step = fc;
  const FeatureMatrix m = build_matrix(trajectories_of(bundles), with_step);
  const Eigen::VectorXd imp = mean_abs_shap(model, m.x);

  std::vector<std::pair<double, std::string>> rows;
  for (Eigen::Index i = 0; i < imp.size(); ++i)
    rows.emplace_back(-imp[i], model.feature_names[static_cast<std::size_t>(i)]);
  std::sort(rows.begin(), rows.end());

  auto out = open_out(c, "importance.csv");
  out << "feature,mean_abs_shap\n";
  for (const auto& [neg, name] : rows) out << name << "," << fmt(-neg) << "\n";
  write_footer(out, c);
  std::cout << "top feature: " << rows.front().second << "\n";
  return 0;
}

int cmd_decide(const RunConfig& c, const fs::path& model_path,
               const fs::path& trace_path, double tau) {
  const BoostedModel model = load_model(model_path);
  const FeatureConfig fc = layout_of(model, c);
  const Trajectory t = load_trace(trace_path);
  const double proba = predict_proba(model, build_vector(t, fc));
  std::cout << (proba < tau ? "stop" : "continue") << " p_success=" << fmt(proba)
            << " tau=" << fmt(tau) << " step=" << fc.step << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trace-to-energy analytics for agent early-stopping"};
  app.set_version_flag("--version", kVersion);
  std::string config_path, corpus_override, out_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> threads_override;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--corpus", corpus_override, "override corpus_dir");
  app.add_option("--out", out_override, "override output_dir");
  app.add_option("--seed", seed_override, "override seed");
  app.add_option("--threads", threads_override, "override selection.threads");

  auto* synth = app.add_subcommand("synth", "generate a labeled fixture corpus");
  int synth_n = 0;
  double synth_shift = -1.0;
  synth->add_option("--n", synth_n, "number of runs");
  synth->add_option("--shift", synth_shift, "planted logprob shift");

  auto* validate = app.add_subcommand("validate", "validate every corpus file");
  auto* energy = app.add_subcommand("energy", "per-step energy ledgers + summary");

  auto* featurize = app.add_subcommand("featurize", "export the feature matrix");
  int feat_step = 1;
  featurize->add_option("--step", feat_step, "decision step")->required();

  auto* train = app.add_subcommand("train", "nested-CV training at one step");
  int train_step = 1;
  train->add_option("--step", train_step, "decision step")->required();

  auto* sweep = app.add_subcommand("sweep", "threshold sweeps + baselines");
  bool plot = false;
  sweep->add_flag("--plot", plot, "also write SVG curves");

  auto* importance = app.add_subcommand("importance", "mean-|Shapley| ranking");
  std::string imp_model;
  importance->add_option("--model", imp_model, "model artifact")->required();

  auto* decide_cmd = app.add_subcommand("decide", "score one partial trace");
  std::string dec_model, dec_trace;
  double dec_tau = 0.5;
  decide_cmd->add_option("--model", dec_model, "model artifact")->required();
  decide_cmd->add_option("--trace", dec_trace, "trace file")->required();
  decide_cmd->add_option("--tau", dec_tau, "stop threshold on P(success)");

  app.require_subcommand(1);
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  try {
    RunConfig c = load_config(config_path);
    if (!corpus_override.empty()) c.corpus_dir = corpus_override;
    if (!out_override.empty()) c.output_dir = out_override;
    if (seed_override) c.seed = *seed_override;
    if (threads_override) c.threads = *threads_override;
    if (synth_n > 0) c.synth.n = synth_n;
    if (synth_shift >= 0.0) c.synth.logprob_shift = synth_shift;
    require_seed(c);  // mandatory everywhere: no wall-clock fallback
    c.config_hash = hash_config(c);

    if (*synth) return cmd_synth(c);
    if (*validate) return cmd_validate(c);
    if (*energy) return cmd_energy(c);
    if (*featurize) return cmd_featurize(c, feat_step);
    if (*train) return cmd_train(c, train_step);
    if (*sweep) return cmd_sweep(c, plot);
    if (*importance) return cmd_importance(c, imp_model);
    if (*decide_cmd) return cmd_decide(c, dec_model, dec_trace, dec_tau);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
