#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tracematch/adversary.hpp"
#include "tracematch/anonymizer.hpp"
#include "tracematch/generator.hpp"
#include "tracematch/model.hpp"
#include "tracematch/rng.hpp"

namespace tracematch {

// One sweep cell: model scale plus every generator and attack knob needed to
// reproduce a trial from (config, seed) alone.
struct TrialConfig {
  int n = 0;
  int s = 1;  // uniform group size; a final group takes n mod s
  double alpha = 1.0;
  double c_const = 1.0;
  Regime regime = Regime::full_knowledge;
  long long m_override = 0;  // 0 means use required_m

  double rho_lo = 0.4;
  double rho_hi = 0.8;
  double mean_lo = 0.0;
  double mean_hi = 1.0;
  double sigma2 = 1.0;
  Topology topology = Topology::complete_group;
  double psd_min_eigenvalue = 1e-9;
  int max_psd_retries = 100;
  double extra_edge_prob = 0.25;
  bool allow_negative_rho = false;

  double edge_threshold_exponent = -0.2;
  int max_group_size_for_matching = 8;
  int target_user = 0;

  // When nonempty, replaces the sampled means (length must equal n).
  std::vector<double> forced_means;

  GeneratorConfig generator_config() const {
    GeneratorConfig g;
    g.n = n;
    g.group_sizes = uniform_group_sizes(n, s);
    g.rho_lo = rho_lo;
    g.rho_hi = rho_hi;
    g.mean_lo = mean_lo;
    g.mean_hi = mean_hi;
    g.sigma2 = sigma2;
    g.topology = topology;
    g.psd_min_eigenvalue = psd_min_eigenvalue;
    g.max_psd_retries = max_psd_retries;
    g.extra_edge_prob = extra_edge_prob;
    g.allow_negative_rho = allow_negative_rho;
    return g;
  }

  AttackConfig attack_config() const {
    AttackConfig a;
    a.alpha = alpha;
    a.c_const = c_const;
    a.regime = regime;
    a.edge_threshold_exponent = edge_threshold_exponent;
    a.max_group_size_for_matching = max_group_size_for_matching;
    return a;
  }

  long long resolved_m() const {
    if (m_override > 0) return m_override;
    return required_m(n, s, alpha, c_const, regime);
  }
};

enum class TrialOutcome {
  strict_success,     // identified, unique candidate at every stage
  ambiguous_success,  // identified via argmin with a tie flag set
  attack_failure,     // wrong row or a stage Failure
  generator_error     // PSD retry exhaustion; excluded from P_e
};

struct TrialRecord {
  std::uint64_t seed = 0;
  TrialConfig config;
  long long m = 0;
  AttackResult result;
  TrialOutcome outcome = TrialOutcome::attack_failure;
  std::string error_message;
  double wall_seconds = 0.0;
};

struct ErrorEstimate {
  long long total_trials = 0;
  long long generator_errors = 0;
  long long trials = 0;  // valid trials = total - generator_errors
  long long successes = 0;
  long long strict_successes = 0;
  long long failures = 0;
  double p_e_hat = 0.0;  // failures / trials
  double ci_low = 0.0;   // 95% Wilson interval on p_e_hat
  double ci_high = 1.0;
  double ambiguity_rate = 0.0;  // ambiguous successes / trials
};

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};

// 95% Wilson score interval; z is the normal 97.5% quantile. At p = 0 or
// p = 1 the exact bound coincides with the estimate, so those endpoints are
// pinned rather than left to ~1e-18 rounding residue from the closed form.
inline WilsonInterval wilson_interval(long long positives, long long n,
                                      double z = 1.959963984540054) {
  if (n <= 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(positives) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  WilsonInterval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  if (positives == 0) ci.low = 0.0;
  if (positives == n) ci.high = 1.0;
  return ci;
}

// Runs fn(0..count-1); worker threads pull indices from a shared counter, so
// any output indexed by i is identical to the serial run.
template <typename Fn>
inline void parallel_for_indexed(long long count, int jobs, Fn&& fn) {
  if (count <= 0) return;
  if (jobs <= 1 || count == 1) {
    for (long long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<long long> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  const int width = static_cast<int>(
      std::min<long long>(jobs, count));
  std::vector<std::thread> workers;
  workers.reserve(width);
  for (int t = 0; t < width; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        const long long i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

// One generate -> anonymize -> attack -> score cycle. PSD exhaustion becomes
// a recorded generator_error; any other exception is a bug and propagates.
inline TrialRecord run_trial(const TrialConfig& cfg, std::uint64_t seed) {
  TrialRecord rec;
  rec.seed = seed;
  rec.config = cfg;
  rec.m = cfg.resolved_m();
  const auto start = std::chrono::steady_clock::now();
  try {
    PopulationParams pop =
        sample_population(cfg.generator_config(), derive_seed(seed, 0));
    if (!cfg.forced_means.empty()) {
      if (static_cast<int>(cfg.forced_means.size()) != cfg.n)
        throw std::invalid_argument("forced_means length must equal n");
      pop = PopulationParams(pop.graph, cfg.forced_means, pop.rho, pop.sigma2);
    }
    TraceSet x = sample_traces(pop, rec.m, derive_seed(seed, 1));
    Permutation pi = sample_permutation(cfg.n, derive_seed(seed, 2));
    AnonymizedTraceSet y = anonymize(x, pi);
    AdversaryKnowledge knowledge{cfg.regime, std::move(pop), cfg.target_user};
    rec.result = attack(y, knowledge, cfg.attack_config());
    evaluate_against_truth(rec.result, pi, knowledge.population.graph,
                           cfg.target_user);
    rec.outcome = !rec.result.success     ? TrialOutcome::attack_failure
                  : rec.result.ambiguous() ? TrialOutcome::ambiguous_success
                                           : TrialOutcome::strict_success;
  } catch (const PSDRetryExhausted& e) {
    rec.outcome = TrialOutcome::generator_error;
    rec.error_message = e.what();
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rec;
}

// Trial i always runs with seed derive_seed(base_seed, i); results are placed
// by index, so the record list does not depend on scheduling.
inline std::vector<TrialRecord> run_trials(const TrialConfig& cfg,
                                           long long trials,
                                           std::uint64_t base_seed,
                                           int jobs = 1) {
  if (trials < 1) throw std::invalid_argument("run_trials needs trials >= 1");
  std::vector<TrialRecord> records(trials);
  parallel_for_indexed(trials, jobs, [&](long long i) {
    records[i] = run_trial(cfg, derive_seed(base_seed, static_cast<std::uint64_t>(i)));
  });
  return records;
}

inline ErrorEstimate aggregate_records(const std::vector<TrialRecord>& records) {
  ErrorEstimate est;
  est.total_trials = static_cast<long long>(records.size());
  for (const TrialRecord& rec : records) {
    switch (rec.outcome) {
      case TrialOutcome::generator_error: ++est.generator_errors; break;
      case TrialOutcome::attack_failure: ++est.failures; break;
      case TrialOutcome::ambiguous_success: ++est.successes; break;
      case TrialOutcome::strict_success:
        ++est.successes;
        ++est.strict_successes;
        break;
    }
  }
  est.trials = est.total_trials - est.generator_errors;
  if (est.trials > 0) {
    est.p_e_hat =
        static_cast<double>(est.failures) / static_cast<double>(est.trials);
    const WilsonInterval ci = wilson_interval(est.failures, est.trials);
    est.ci_low = ci.low;
    est.ci_high = ci.high;
    est.ambiguity_rate =
        static_cast<double>(est.successes - est.strict_successes) /
        static_cast<double>(est.trials);
  }
  return est;
}

inline ErrorEstimate estimate_error(const TrialConfig& cfg, long long trials,
                                    std::uint64_t base_seed, int jobs = 1) {
  return aggregate_records(run_trials(cfg, trials, base_seed, jobs));
}

struct SweepSpec {
  std::vector<Regime> regimes{Regime::full_knowledge};
  std::vector<int> n_values;
  std::vector<int> s_values;
  std::vector<double> alpha_values;
  std::vector<double> c_values{1.0};
  long long trials = 100;
  std::uint64_t base_seed = 1;
  int jobs = 1;
  TrialConfig base;  // knobs shared by all cells; grid fields are overridden

  void validate() const {
    if (regimes.empty() || n_values.empty() || s_values.empty() ||
        alpha_values.empty() || c_values.empty())
      throw std::invalid_argument("sweep grids must be nonempty");
    if (trials < 1) throw std::invalid_argument("sweep needs trials >= 1");
  }
};

struct SweepRow {
  TrialConfig config;
  long long m = 0;
  std::uint64_t cell_seed = 0;
  ErrorEstimate estimate;
};

// Cells run in the fixed nesting regime > n > s > alpha > c; cell i uses seed
// derive_seed(base_seed, i). Output order and content are pure functions of
// the SweepSpec.
inline std::vector<SweepRow> sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<SweepRow> rows;
  std::uint64_t cell_index = 0;
  for (Regime regime : spec.regimes)
    for (int n : spec.n_values)
      for (int s : spec.s_values)
        for (double alpha : spec.alpha_values)
          for (double c : spec.c_values) {
            SweepRow row;
            row.config = spec.base;
            row.config.regime = regime;
            row.config.n = n;
            row.config.s = s;
            row.config.alpha = alpha;
            row.config.c_const = c;
            row.m = row.config.resolved_m();
            row.cell_seed = derive_seed(spec.base_seed, cell_index++);
            row.estimate =
                estimate_error(row.config, spec.trials, row.cell_seed, spec.jobs);
            rows.push_back(std::move(row));
          }
  return rows;
}

struct ScalingReport {
  std::vector<SweepRow> rows;  // one per n, in grid order
  bool decay_observed = false;
};

// Decay experiment: for each n in the grid, m = required_m(n, s,
// alpha, c, regime) (unless base.m_override is set) and P_e is estimated;
// decay is declared when the last CI sits strictly below the first, or both
// endpoints estimate zero error.
inline ScalingReport scaling_experiment(const TrialConfig& base,
                                        const std::vector<int>& n_grid,
                                        long long trials,
                                        std::uint64_t base_seed, int jobs = 1) {
  if (n_grid.empty())
    throw std::domain_error("scaling_experiment needs a nonempty n grid");
  for (std::size_t i = 1; i < n_grid.size(); ++i)
    if (n_grid[i] <= n_grid[i - 1])
      throw std::domain_error("scaling_experiment needs increasing n values");
  if (base.alpha < 0.0)
    throw std::domain_error("scaling_experiment needs alpha >= 0");

  SweepSpec spec;
  spec.regimes = {base.regime};
  spec.n_values = n_grid;
  spec.s_values = {base.s};
  spec.alpha_values = {base.alpha};
  spec.c_values = {base.c_const};
  spec.trials = trials;
  spec.base_seed = base_seed;
  spec.jobs = jobs;
  spec.base = base;

  ScalingReport report;
  report.rows = sweep(spec);
  const ErrorEstimate& first = report.rows.front().estimate;
  const ErrorEstimate& last = report.rows.back().estimate;
  report.decay_observed = last.ci_high < first.ci_low ||
                          (first.p_e_hat == 0.0 && last.p_e_hat == 0.0);
  return report;
}

}  // namespace tracematch
