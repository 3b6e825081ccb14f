#include <doctest.h>

#include <cmath>
#include <deque>

#include "tracewatt/simulate.hpp"

using namespace tracewatt;

namespace {

struct Fixture {
  std::deque<Trajectory> trajectories;
  std::deque<EnergyLedger> ledgers;
  std::vector<SimRun> corpus;

  // One run with the given per-step energies (mWh), all booked as inference.
  void add(const std::string& run_id, int outcome,
           const std::vector<double>& step_mwh,
           const std::vector<std::vector<double>>& step_logprobs = {}) {
    Trajectory t;
    t.run_id = run_id;
    t.task_id = "task";
    t.outcome = outcome;
    EnergyLedger l;
    l.run_id = run_id;
    for (std::size_t i = 0; i < step_mwh.size(); ++i) {
      Step s;
      s.index = static_cast<int>(i) + 1;
      s.inference_started_ms = static_cast<std::int64_t>(i) * 1000;
      s.inference_ended_ms = s.inference_started_ms + 500;
      if (i < step_logprobs.size())
        for (double lp : step_logprobs[i]) s.tokens.push_back({"t", lp});
      t.steps.push_back(std::move(s));
      StepEnergy e;
      e.step_index = static_cast<int>(i) + 1;
      e.inference_mwh = step_mwh[i];
      l.per_step_mwh.push_back(e);
      l.total_mwh += step_mwh[i];
    }
    trajectories.push_back(std::move(t));
    ledgers.push_back(std::move(l));
    corpus.push_back({&trajectories.back(), &ledgers.back()});
  }
};

}  // namespace

TEST_CASE("decide: no decision before the policy step") {
  Fixture f;
  f.add("r1", 1, {1.0, 1.0});
  Policy p;
  p.kind = PolicyKind::random;
  p.p_stop = 1.0;
  const Decision d = decide(p, *f.corpus[0].trajectory, 3);
  CHECK_FALSE(d.had_decision);
  CHECK_FALSE(d.stopped);
  CHECK(decide(p, *f.corpus[0].trajectory, 2).had_decision);
}

TEST_CASE("decide: classifier stops strictly below tau") {
  Fixture f;
  f.add("r1", 1, {1.0});
  Policy p;
  p.kind = PolicyKind::classifier;
  p.tau = 0.5;
  p.success_proba = {{"r1", 0.5}};
  CHECK_FALSE(decide(p, *f.corpus[0].trajectory, 1).stopped);
  p.success_proba["r1"] = 0.4999;
  CHECK(decide(p, *f.corpus[0].trajectory, 1).stopped);
  p.success_proba.clear();
  CHECK_THROWS_AS(decide(p, *f.corpus[0].trajectory, 1), SimulateError);
}

TEST_CASE("decide: logprob baselines read the decision step only") {
  Fixture f;
  f.add("r1", 0, {1.0, 1.0}, {{-5.0, -0.1}, {-0.2, -0.3}});
  Policy p;
  p.kind = PolicyKind::min_logprob;
  p.theta = -1.0;
  CHECK(decide(p, *f.corpus[0].trajectory, 1).stopped);   // min -5 < -1
  CHECK_FALSE(decide(p, *f.corpus[0].trajectory, 2).stopped);  // min -0.3
  p.kind = PolicyKind::mean_logprob;
  p.theta = -2.0;
  CHECK(decide(p, *f.corpus[0].trajectory, 1).stopped);   // mean -2.55
  CHECK_FALSE(decide(p, *f.corpus[0].trajectory, 2).stopped);  // mean -0.25
}

TEST_CASE("decide: token-free steps never trip the logprob baselines") {
  Fixture f;
  f.add("r1", 0, {1.0}, {{}});
  Policy p;
  p.kind = PolicyKind::min_logprob;
  p.theta = -0.1;
  CHECK_FALSE(decide(p, *f.corpus[0].trajectory, 1).stopped);
  p.kind = PolicyKind::mean_logprob;
  CHECK_FALSE(decide(p, *f.corpus[0].trajectory, 1).stopped);
}

TEST_CASE("decide: random draws depend only on run_id and seed") {
  Fixture f;
  f.add("r1", 0, {1.0});
  Policy p;
  p.kind = PolicyKind::random;
  p.p_stop = 0.5;
  p.seed = 31;
  const bool first = decide(p, *f.corpus[0].trajectory, 1).stopped;
  for (int i = 0; i < 5; ++i)
    CHECK(decide(p, *f.corpus[0].trajectory, 1).stopped == first);
  // over many run ids, roughly half stop
  int stopped = 0;
  Fixture many;
  for (int i = 0; i < 200; ++i)
    many.add("run_" + std::to_string(i), 0, {1.0});
  for (const SimRun& r : many.corpus)
    stopped += decide(p, *r.trajectory, 1).stopped;
  CHECK(stopped > 60);
  CHECK(stopped < 140);
}

TEST_CASE("four-run classifier simulation reproduces the hand ledger") {
  Fixture f;
  f.add("A", 1, {4.0, 6.0});
  f.add("B", 0, {8.0, 12.0});
  f.add("C", 0, {12.0, 18.0});
  f.add("D", 1, {5.0, 10.0});
  Policy p;
  p.kind = PolicyKind::classifier;
  p.tau = 0.5;
  p.success_proba = {{"A", 0.9}, {"B", 0.1}, {"C", 0.8}, {"D", 0.2}};
  SimulationConfig cfg;
  cfg.decision_step = 1;
  cfg.classifier_cost_mwh = 0.01;
  const SimulationResult r = simulate(f.corpus, p, cfg);
  CHECK(r.bundle.wastage_mwh == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(r.bundle.early_stop_wastage_mwh == doctest::Approx(43.04).epsilon(1e-12));
  CHECK(r.bundle.reduction_pct == doctest::Approx(13.92).epsilon(1e-12));
  CHECK(r.bundle.utility_drop_pct == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(r.bundle.stopped_failures == 1);
  CHECK(r.bundle.stopped_successes == 1);
}

TEST_CASE("tau endpoints: never stop and always stop") {
  Fixture f;
  f.add("A", 1, {4.0, 6.0});
  f.add("B", 0, {8.0, 12.0});
  Policy p;
  p.kind = PolicyKind::classifier;
  p.success_proba = {{"A", 0.9}, {"B", 0.1}};
  SimulationConfig cfg;
  cfg.decision_step = 1;
  cfg.classifier_cost_mwh = 0.01;

  const std::vector<SimulationResult> rs = sweep(f.corpus, p, cfg, {0.0, 1.1});
  // tau = 0: nothing stops; only the decision cost is paid
  CHECK(rs[0].bundle.stopped_failures == 0);
  CHECK(rs[0].bundle.stopped_successes == 0);
  CHECK(rs[0].bundle.utility_drop_pct == 0.0);
  CHECK(rs[0].bundle.early_stop_wastage_mwh ==
        doctest::Approx(20.0 + 2 * 0.01).epsilon(1e-12));
  CHECK(rs[0].bundle.reduction_pct < 0.0);
  // tau > 1: everything stops
  CHECK(rs[1].bundle.stopped_failures == 1);
  CHECK(rs[1].bundle.stopped_successes == 1);
  CHECK(rs[1].bundle.utility_drop_pct == doctest::Approx(100.0));
}

TEST_CASE("utility drop is monotone in tau") {
  Fixture f;
  for (int i = 0; i < 20; ++i)
    f.add("r" + std::to_string(i), i % 2, {1.0, 2.0, 3.0});
  Policy p;
  p.kind = PolicyKind::classifier;
  for (int i = 0; i < 20; ++i)
    p.success_proba["r" + std::to_string(i)] = (i % 10) / 10.0;
  SimulationConfig cfg;
  cfg.decision_step = 2;
  std::vector<double> taus;
  for (int i = 0; i <= 10; ++i) taus.push_back(i / 10.0);
  const std::vector<SimulationResult> rs = sweep(f.corpus, p, cfg, taus);
  for (std::size_t i = 1; i < rs.size(); ++i) {
    CHECK(rs[i].bundle.utility_drop_pct >= rs[i - 1].bundle.utility_drop_pct);
    CHECK(rs[i].bundle.stopped_failures >= rs[i - 1].bundle.stopped_failures);
  }
}

TEST_CASE("cutoff excludes later per-step energy from both sides") {
  Fixture f;
  f.add("r1", 0, {1.0, 2.0, 4.0});
  Policy p;
  p.kind = PolicyKind::classifier;
  p.tau = 0.5;
  p.success_proba = {{"r1", 0.9}};  // continues
  SimulationConfig cfg;
  cfg.decision_step = 1;
  cfg.cutoff_step = 2;
  SimulationResult r = simulate(f.corpus, p, cfg);
  CHECK(r.decision_log[0].full_mwh == doctest::Approx(3.0));
  CHECK(r.decision_log[0].partial_mwh == doctest::Approx(1.0));
  p.success_proba["r1"] = 0.1;  // stops at step 1
  r = simulate(f.corpus, p, cfg);
  CHECK(r.bundle.early_stop_wastage_mwh ==
        doctest::Approx(1.0 + cfg.classifier_cost_mwh).epsilon(1e-12));
}

TEST_CASE("runs shorter than the decision step pay full and no cost") {
  Fixture f;
  f.add("short", 0, {2.0});
  f.add("long", 0, {2.0, 3.0});
  Policy p;
  p.kind = PolicyKind::classifier;
  p.tau = 0.9;
  p.success_proba = {{"short", 0.1}, {"long", 0.1}};
  SimulationConfig cfg;
  cfg.decision_step = 2;
  cfg.classifier_cost_mwh = 0.01;
  const SimulationResult r = simulate(f.corpus, p, cfg);
  // short: no decision -> full 2.0, no cost; long: stopped -> partial 5.0
  CHECK(r.decision_log[0].had_decision == false);
  CHECK(r.bundle.early_stop_wastage_mwh == doctest::Approx(2.0 + 5.0 + 0.01));
}

TEST_CASE("random decisions are independent of corpus order") {
  Fixture fwd, rev;
  for (int i = 0; i < 30; ++i)
    fwd.add("r" + std::to_string(i), i % 2, {1.0, 1.0});
  for (int i = 29; i >= 0; --i)
    rev.add("r" + std::to_string(i), i % 2, {1.0, 1.0});
  Policy p;
  p.kind = PolicyKind::random;
  p.p_stop = 0.5;
  p.seed = 77;
  SimulationConfig cfg;
  const SimulationResult a = simulate(fwd.corpus, p, cfg);
  const SimulationResult b = simulate(rev.corpus, p, cfg);
  for (const StopDecision& da : a.decision_log) {
    for (const StopDecision& db : b.decision_log)
      if (da.run_id == db.run_id) CHECK(da.stopped == db.stopped);
  }
  CHECK(a.bundle.early_stop_wastage_mwh ==
        doctest::Approx(b.bundle.early_stop_wastage_mwh).epsilon(1e-12));
}

TEST_CASE("only the classifier pays the decision cost") {
  Fixture f;
  f.add("A", 1, {4.0, 6.0});
  f.add("B", 0, {8.0, 12.0});
  Policy p;
  p.kind = PolicyKind::random;
  p.p_stop = 0.0;  // never stops
  SimulationConfig cfg;
  cfg.decision_step = 1;
  cfg.classifier_cost_mwh = 5.0;
  const SimulationResult r = simulate(f.corpus, p, cfg);
  CHECK(r.bundle.early_stop_wastage_mwh ==
        doctest::Approx(r.bundle.wastage_mwh).epsilon(1e-12));
  CHECK(r.bundle.reduction_pct == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("configuration errors") {
  Fixture f;
  f.add("r1", 0, {1.0});
  Policy p;
  p.kind = PolicyKind::random;
  SimulationConfig cfg;
  cfg.decision_step = 0;
  CHECK_THROWS_AS(simulate(f.corpus, p, cfg), SimulateError);
  cfg.decision_step = 3;
  cfg.cutoff_step = 2;
  CHECK_THROWS_AS(simulate(f.corpus, p, cfg), SimulateError);
}

TEST_CASE("compare flattens policy sweeps into rows") {
  Fixture f;
  f.add("A", 1, {4.0, 6.0});
  f.add("B", 0, {8.0, 12.0});
  Policy cls;
  cls.kind = PolicyKind::classifier;
  cls.success_proba = {{"A", 0.9}, {"B", 0.1}};
  Policy rnd;
  rnd.kind = PolicyKind::random;
  rnd.seed = 5;
  SimulationConfig cfg;
  const Comparison cmp =
      compare(f.corpus, {{cls, {0.2, 0.5}}, {rnd, {0.0, 0.5, 1.0}}}, cfg);
  REQUIRE(cmp.rows.size() == 5);
  CHECK(cmp.rows[0].policy == "classifier");
  CHECK(cmp.rows[0].threshold == 0.2);
  CHECK(cmp.rows[2].policy == "random");
  CHECK(cmp.rows[4].threshold == 1.0);
  CHECK(cmp.results.size() == cmp.rows.size());
}

TEST_CASE("dominance fraction over reduction/drop envelopes") {
  const auto point = [](double reduction, double drop) {
    SimulationResult r;
    r.bundle.reduction_pct = reduction;
    r.bundle.utility_drop_pct = drop;
    return r;
  };
  const std::vector<SimulationResult> strong = {point(20.0, 0.0), point(40.0, 5.0),
                                                point(60.0, 10.0)};
  const std::vector<SimulationResult> weak = {point(5.0, 0.0), point(15.0, 5.0),
                                              point(30.0, 10.0)};
  CHECK(dominance_fraction(strong, weak) == doctest::Approx(1.0));
  CHECK(dominance_fraction(weak, strong) == doctest::Approx(0.0));
  // mixed: weak wins only at a drop level strong cannot reach
  const std::vector<SimulationResult> early = {point(10.0, 0.0)};
  const std::vector<SimulationResult> late = {point(50.0, 5.0)};
  CHECK(dominance_fraction(early, late) == doctest::Approx(0.5));
  CHECK_THROWS_AS(dominance_fraction({}, {}), SimulateError);
}

TEST_CASE("audit: replay totals reconcile with the ledgers") {
  Fixture f;
  f.add("A", 1, {1.0, 2.0});
  f.add("B", 0, {3.0, 4.0});
  Policy p;
  p.kind = PolicyKind::classifier;
  p.tau = 0.5;
  p.success_proba = {{"A", 0.9}, {"B", 0.1}};
  SimulationConfig cfg;
  cfg.decision_step = 1;
  const SimulationResult r = simulate(f.corpus, p, cfg);
  for (const StopDecision& d : r.decision_log) {
    CHECK(d.partial_mwh <= d.full_mwh);
    const EnergyLedger& l = d.run_id == "A" ? *f.corpus[0].ledger : *f.corpus[1].ledger;
    CHECK(d.full_mwh == doctest::Approx(l.total_mwh).epsilon(1e-12));
  }
}
