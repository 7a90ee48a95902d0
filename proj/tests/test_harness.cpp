#include "tracematch/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracematch/model.hpp"

namespace tracematch {
namespace {

bool same_double(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

// Full-record equality except wall_seconds, which is timing noise.
void expect_records_equal(const TrialRecord& a, const TrialRecord& b) {
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.outcome, b.outcome);
  EXPECT_EQ(a.error_message, b.error_message);
  EXPECT_EQ(a.result.identified_index, b.result.identified_index);
  EXPECT_EQ(a.result.failure, b.result.failure);
  EXPECT_EQ(a.result.truth_index, b.result.truth_index);
  EXPECT_EQ(a.result.success, b.result.success);
  EXPECT_EQ(a.result.graph.edges, b.result.graph.edges);
  EXPECT_EQ(a.result.graph.groups, b.result.graph.groups);
  const AttackDiagnostics& da = a.result.diagnostics;
  const AttackDiagnostics& db = b.result.diagnostics;
  EXPECT_EQ(da.reconstructed_edge_count, db.reconstructed_edge_count);
  EXPECT_TRUE(same_double(da.group_match_distance, db.group_match_distance));
  EXPECT_EQ(da.group_candidates, db.group_candidates);
  EXPECT_EQ(da.group_ambiguous, db.group_ambiguous);
  EXPECT_TRUE(same_double(da.user_match_distance, db.user_match_distance));
  EXPECT_EQ(da.user_candidates, db.user_candidates);
  EXPECT_EQ(da.user_ambiguous, db.user_ambiguous);
  EXPECT_EQ(da.graph_edge_errors, db.graph_edge_errors);
}

void expect_estimates_equal(const ErrorEstimate& a, const ErrorEstimate& b) {
  EXPECT_EQ(a.total_trials, b.total_trials);
  EXPECT_EQ(a.generator_errors, b.generator_errors);
  EXPECT_EQ(a.trials, b.trials);
  EXPECT_EQ(a.successes, b.successes);
  EXPECT_EQ(a.strict_successes, b.strict_successes);
  EXPECT_EQ(a.failures, b.failures);
  EXPECT_EQ(a.p_e_hat, b.p_e_hat);
  EXPECT_EQ(a.ci_low, b.ci_low);
  EXPECT_EQ(a.ci_high, b.ci_high);
  EXPECT_EQ(a.ambiguity_rate, b.ambiguity_rate);
}

TEST(RunTrial, SameSeedSameRecord) {
  TrialConfig cfg;
  cfg.n = 8;
  cfg.s = 2;
  cfg.alpha = 1.0;
  cfg.regime = Regime::full_knowledge;
  TrialRecord a = run_trial(cfg, 424242);
  TrialRecord b = run_trial(cfg, 424242);
  expect_records_equal(a, b);
  EXPECT_EQ(a.m, required_m(8, 2, 1.0, 1.0, Regime::full_knowledge));
}

TEST(RunTrial, IndependentForcedMeansSucceeds) {
  TrialConfig cfg;
  cfg.n = 2;
  cfg.s = 1;
  cfg.regime = Regime::independent;
  cfg.m_override = 10000;
  cfg.forced_means = {0.1, 0.9};
  for (int t = 0; t < 20; ++t) {
    TrialRecord rec = run_trial(cfg, derive_seed(600, t));
    EXPECT_EQ(rec.outcome, TrialOutcome::strict_success) << "trial " << t;
    EXPECT_TRUE(rec.result.success);
  }
}

TEST(RunTrial, StarvedTrialRecordsFailureWithoutCrashing) {
  TrialConfig cfg;
  cfg.n = 4;
  cfg.s = 2;
  cfg.regime = Regime::full_knowledge;
  cfg.m_override = 1;
  int failures = 0;
  for (int t = 0; t < 30; ++t) {
    TrialRecord rec = run_trial(cfg, derive_seed(601, t));
    EXPECT_NE(rec.outcome, TrialOutcome::generator_error);
    if (rec.outcome == TrialOutcome::attack_failure) ++failures;
  }
  // m=1 gives the estimator no information; failures dominate.
  EXPECT_GE(failures, 20);
}

TEST(RunTrial, ForcedMeansLengthIsChecked) {
  TrialConfig cfg;
  cfg.n = 4;
  cfg.s = 2;
  cfg.m_override = 10;
  cfg.forced_means = {0.5};
  EXPECT_THROW(run_trial(cfg, 1), std::invalid_argument);
}

TEST(RunTrial, PsdExhaustionBecomesGeneratorError) {
  TrialConfig cfg;
  cfg.n = 4;
  cfg.s = 4;
  cfg.regime = Regime::full_knowledge;
  cfg.m_override = 16;
  cfg.rho_lo = 0.90;
  cfg.rho_hi = 0.99;
  cfg.allow_negative_rho = true;
  cfg.max_psd_retries = 0;

  int found = -1;
  std::string message;
  for (int t = 0; t < 64 && found < 0; ++t) {
    TrialRecord rec = run_trial(cfg, derive_seed(602, t));
    if (rec.outcome == TrialOutcome::generator_error) {
      found = t;
      message = rec.error_message;
    }
  }
  ASSERT_GE(found, 0) << "no PSD exhaustion among 64 seeds";
  EXPECT_NE(message.find("PSD"), std::string::npos);
  TrialRecord again = run_trial(cfg, derive_seed(602, found));
  EXPECT_EQ(again.outcome, TrialOutcome::generator_error);
  EXPECT_EQ(again.error_message, message);
}

TEST(WilsonInterval, MatchesClosedFormValues) {
  const WilsonInterval ten = wilson_interval(10, 100);
  EXPECT_DOUBLE_EQ(ten.low, 0.05522913706067509);
  EXPECT_DOUBLE_EQ(ten.high, 0.17436566150491345);

  const WilsonInterval zero = wilson_interval(0, 100);
  EXPECT_DOUBLE_EQ(zero.low, 0.0);
  EXPECT_DOUBLE_EQ(zero.high, 0.03699349820698568);

  const WilsonInterval empty = wilson_interval(0, 0);
  EXPECT_EQ(empty.low, 0.0);
  EXPECT_EQ(empty.high, 1.0);
}

TEST(WilsonInterval, BracketsTheEstimateAndShrinks) {
  for (long long k : {0LL, 3LL, 25LL, 50LL}) {
    const WilsonInterval ci = wilson_interval(k, 50);
    const double p = k / 50.0;
    EXPECT_LE(ci.low, p);
    EXPECT_GE(ci.high, p);
    const WilsonInterval wide = wilson_interval(k * 4, 200);
    EXPECT_LT(wide.high - wide.low, ci.high - ci.low);
  }
}

std::vector<TrialRecord> synthetic_records() {
  auto rec = [](TrialOutcome outcome) {
    TrialRecord r;
    r.outcome = outcome;
    return r;
  };
  std::vector<TrialRecord> records;
  for (int i = 0; i < 60; ++i) records.push_back(rec(TrialOutcome::strict_success));
  for (int i = 0; i < 20; ++i)
    records.push_back(rec(TrialOutcome::ambiguous_success));
  for (int i = 0; i < 10; ++i) records.push_back(rec(TrialOutcome::attack_failure));
  for (int i = 0; i < 10; ++i)
    records.push_back(rec(TrialOutcome::generator_error));
  return records;
}

TEST(AggregateRecords, CategoriesArePartitioned) {
  const ErrorEstimate est = aggregate_records(synthetic_records());
  EXPECT_EQ(est.total_trials, 100);
  EXPECT_EQ(est.generator_errors, 10);
  EXPECT_EQ(est.trials, 90);  // valid trials exclude generator errors
  EXPECT_EQ(est.successes, 80);
  EXPECT_EQ(est.strict_successes, 60);
  EXPECT_EQ(est.failures, 10);
  EXPECT_EQ(est.successes + est.failures, est.trials);
  EXPECT_DOUBLE_EQ(est.p_e_hat, 10.0 / 90.0);
  EXPECT_DOUBLE_EQ(est.ambiguity_rate, 20.0 / 90.0);
  const WilsonInterval ci = wilson_interval(10, 90);
  EXPECT_DOUBLE_EQ(est.ci_low, ci.low);
  EXPECT_DOUBLE_EQ(est.ci_high, ci.high);
  EXPECT_LE(est.ci_low, est.p_e_hat);
  EXPECT_GE(est.ci_high, est.p_e_hat);
}

TEST(EstimateError, AllSuccessGivesZeroFloor) {
  TrialConfig cfg;
  cfg.n = 2;
  cfg.s = 1;
  cfg.regime = Regime::independent;
  cfg.m_override = 10000;
  cfg.forced_means = {0.1, 0.9};
  const ErrorEstimate est = estimate_error(cfg, 20, 600);
  EXPECT_EQ(est.failures, 0);
  EXPECT_DOUBLE_EQ(est.p_e_hat, 0.0);
  EXPECT_DOUBLE_EQ(est.ci_low, 0.0);
  EXPECT_GT(est.ci_high, 0.0);
  EXPECT_DOUBLE_EQ(est.ambiguity_rate, 0.0);
}

TEST(RunTrials, ParallelMatchesSerial) {
  TrialConfig cfg;
  cfg.n = 6;
  cfg.s = 2;
  cfg.regime = Regime::full_knowledge;
  cfg.m_override = 2000;
  const auto serial = run_trials(cfg, 16, 707, 1);
  const auto parallel = run_trials(cfg, 16, 707, 4);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i)
    expect_records_equal(serial[i], parallel[i]);
  expect_estimates_equal(aggregate_records(serial),
                         aggregate_records(parallel));
  EXPECT_THROW(run_trials(cfg, 0, 707), std::invalid_argument);
}

TEST(Sweep, SingleCellMatchesEstimateError) {
  SweepSpec spec;
  spec.regimes = {Regime::full_knowledge};
  spec.n_values = {6};
  spec.s_values = {2};
  spec.alpha_values = {1.0};
  spec.trials = 10;
  spec.base_seed = 909;
  const auto rows = sweep(spec);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].cell_seed, derive_seed(909, 0));
  EXPECT_EQ(rows[0].m, required_m(6, 2, 1.0, 1.0, Regime::full_knowledge));

  TrialConfig cfg = spec.base;
  cfg.regime = Regime::full_knowledge;
  cfg.n = 6;
  cfg.s = 2;
  cfg.alpha = 1.0;
  expect_estimates_equal(rows[0].estimate,
                         estimate_error(cfg, 10, rows[0].cell_seed));
}

TEST(Sweep, CellOrderIsRegimeNSAlphaC) {
  SweepSpec spec;
  spec.regimes = {Regime::full_knowledge, Regime::independent};
  spec.n_values = {4, 6};
  spec.s_values = {1, 2};
  spec.alpha_values = {0.5, 1.0};
  spec.c_values = {1.0};
  spec.trials = 1;
  spec.base.m_override = 8;  // keep the grid cheap; ordering is the point
  const auto rows = sweep(spec);
  ASSERT_EQ(rows.size(), 16u);
  std::size_t i = 0;
  for (Regime regime : spec.regimes)
    for (int n : spec.n_values)
      for (int s : spec.s_values)
        for (double alpha : spec.alpha_values) {
          EXPECT_EQ(rows[i].config.regime, regime);
          EXPECT_EQ(rows[i].config.n, n);
          EXPECT_EQ(rows[i].config.s, s);
          EXPECT_EQ(rows[i].config.alpha, alpha);
          EXPECT_EQ(rows[i].cell_seed,
                    derive_seed(spec.base_seed, static_cast<std::uint64_t>(i)));
          ++i;
        }

  SweepSpec bad = spec;
  bad.n_values.clear();
  EXPECT_THROW(sweep(bad), std::invalid_argument);
}

TEST(ScalingExperiment, RejectsBadGridsAndAlpha) {
  TrialConfig base;
  base.s = 2;
  base.regime = Regime::full_knowledge;
  EXPECT_THROW(scaling_experiment(base, {}, 5, 1), std::domain_error);
  EXPECT_THROW(scaling_experiment(base, {20, 20}, 5, 1), std::domain_error);
  EXPECT_THROW(scaling_experiment(base, {40, 20}, 5, 1), std::domain_error);
  base.alpha = -0.5;
  EXPECT_THROW(scaling_experiment(base, {4, 8}, 5, 1), std::domain_error);
}

TEST(ScalingExperiment, PerfectRunReportsDecay) {
  // Forced well-separated means make every trial succeed, hitting the
  // "both endpoints at zero" arm of the decay rule.
  TrialConfig base;
  base.n = 2;
  base.s = 1;
  base.regime = Regime::independent;
  base.m_override = 10000;
  base.forced_means = {0.1, 0.9};
  const ScalingReport rep = scaling_experiment(base, {2}, 10, 600);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.rows[0].estimate.p_e_hat, 0.0);
  EXPECT_TRUE(rep.decay_observed);
}

TEST(ScalingExperiment, StarvedRunShowsNoDecay) {
  // m = 2 is the negative control: error stays at the ceiling for every n.
  TrialConfig base;
  base.s = 2;
  base.alpha = 1.5;
  base.regime = Regime::full_knowledge;
  base.m_override = 2;
  const ScalingReport rep = scaling_experiment(base, {12, 24}, 40, 1007);
  for (const SweepRow& row : rep.rows) {
    EXPECT_EQ(row.m, 2);
    EXPECT_GE(row.estimate.p_e_hat, 0.5) << "n=" << row.config.n;
  }
  EXPECT_FALSE(rep.decay_observed);
}

}  // namespace
}  // namespace tracematch
