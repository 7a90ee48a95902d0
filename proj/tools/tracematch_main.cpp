// Command-line front end: generate populations and traces, run single
// attacks, sweep Monte Carlo grids, and print threshold tables.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tracematch/adversary.hpp"
#include "tracematch/anonymizer.hpp"
#include "tracematch/generator.hpp"
#include "tracematch/harness.hpp"
#include "tracematch/io.hpp"
#include "tracematch/model.hpp"

namespace {

using namespace tracematch;

constexpr const char* kSeedEnvVar = "GAUSS_DEANON_SEED";

// Seed precedence: --seed flag, then GAUSS_DEANON_SEED, then 1. The sweep
// subcommand inserts its spec-file seed between the flag and the env var.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed,
                           const std::optional<std::uint64_t>& file_seed = {}) {
  if (flag_seed) return *flag_seed;
  if (file_seed) return *file_seed;
  if (const char* env = std::getenv(kSeedEnvVar)) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw std::runtime_error(std::string(kSeedEnvVar) +
                               " is not an unsigned integer: '" + env + "'");
    return static_cast<std::uint64_t>(v);
  }
  return 1;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

int cmd_generate(const std::string& config_path, const std::string& out_prefix,
                 std::optional<std::uint64_t> seed_flag, bool emit_perm) {
  const GenerateSpec spec = parse_generate_spec(config_path);
  const std::uint64_t seed = resolve_seed(seed_flag);

  const PopulationParams pop =
      sample_population(spec.config, derive_seed(seed, 0));
  const TraceSet x = sample_traces(pop, spec.m, derive_seed(seed, 1));
  const Permutation pi = sample_permutation(spec.config.n, derive_seed(seed, 2));
  const AnonymizedTraceSet y = anonymize(x, pi);

  write_population(pop, out_prefix + ".population");
  write_traces(y, pop.sigma2, out_prefix + ".traces");
  if (emit_perm) write_permutation(pi, out_prefix + ".perm");

  std::cout << "n: " << pop.n() << "\n";
  std::cout << "m: " << spec.m << "\n";
  std::cout << "seed: " << seed << "\n";
  std::cout << "groups:";
  for (const auto& group : pop.graph.groups) std::cout << " " << group.size();
  std::cout << "\n";
  std::cout << "edges: " << pop.graph.edges.size() << "\n";
  std::cout << "min_block_eigenvalue: " << format_double(min_block_eigenvalue(pop))
            << "\n";
  std::cout << "wrote: " << out_prefix << ".population " << out_prefix
            << ".traces";
  if (emit_perm) std::cout << " " << out_prefix << ".perm";
  std::cout << "\n";
  return 0;
}

int cmd_attack(const std::string& traces_path, const std::string& knowledge_path,
               const std::string& perm_path, const std::string& regime_name,
               double alpha, int target_user, double threshold_exponent,
               int max_group_size) {
  const Regime regime = regime_from_string(regime_name);
  const LoadedTraces loaded = read_traces(traces_path);
  const PopulationParams pop = read_population(knowledge_path, loaded.sigma2);

  AttackConfig cfg;
  cfg.alpha = alpha;
  cfg.regime = regime;
  cfg.edge_threshold_exponent = threshold_exponent;
  cfg.max_group_size_for_matching = max_group_size;

  AdversaryKnowledge knowledge{regime, pop, target_user};
  AttackResult result = attack(loaded.traces, knowledge, cfg);

  std::cout << "regime: " << to_string(regime) << "\n";
  std::cout << "n: " << loaded.traces.n << "\n";
  std::cout << "m: " << loaded.traces.m << "\n";
  std::cout << "target_user: " << target_user << "\n";
  if (regime != Regime::independent) {
    const int s = static_cast<int>(
        pop.graph.groups[pop.graph.group_of(target_user)].size());
    const double radius = regime == Regime::full_knowledge
                              ? delta_n(loaded.traces.n, s, alpha)
                              : structure_only_radius(loaded.traces.n, s, alpha);
    std::cout << "s: " << s << "\n";
    std::cout << "edge_threshold: "
              << format_double(edge_threshold(loaded.traces.m, threshold_exponent))
              << "\n";
    std::cout << "radius: " << format_double(radius) << "\n";
    std::cout << "reconstructed_edges: "
              << result.diagnostics.reconstructed_edge_count << "\n";
    std::cout << "group_distance: "
              << format_double(result.diagnostics.group_match_distance) << "\n";
    std::cout << "group_candidates: " << result.diagnostics.group_candidates
              << "\n";
    std::cout << "group_ambiguous: "
              << bool_str(result.diagnostics.group_ambiguous) << "\n";
  }
  std::cout << "user_distance: "
            << format_double(result.diagnostics.user_match_distance) << "\n";
  if (regime != Regime::independent) {
    std::cout << "user_candidates: " << result.diagnostics.user_candidates
              << "\n";
    std::cout << "user_ambiguous: " << bool_str(result.diagnostics.user_ambiguous)
              << "\n";
  }
  if (result.identified_index)
    std::cout << "identified: " << *result.identified_index << "\n";
  else
    std::cout << "identified: none\n";
  std::cout << "failure: " << to_string(result.failure) << "\n";

  if (!perm_path.empty()) {
    const Permutation pi = read_permutation(perm_path);
    evaluate_against_truth(result, pi, pop.graph, target_user);
    std::cout << "truth_index: " << result.truth_index << "\n";
    std::cout << "success: " << bool_str(result.success) << "\n";
    if (result.diagnostics.graph_edge_errors >= 0)
      std::cout << "graph_edge_errors: " << result.diagnostics.graph_edge_errors
                << "\n";
  }
  return 0;  // attack failure is data, not a process error
}

int cmd_sweep(const std::string& spec_path, const std::string& out_path,
              std::optional<std::uint64_t> seed_flag, std::optional<int> jobs,
              bool emit_gnuplot) {
  SweepSpec spec = parse_sweep_spec(spec_path);
  const std::optional<std::uint64_t> file_seed =
      ConfigMap::parse_file(spec_path).has("seed")
          ? std::optional<std::uint64_t>(spec.base_seed)
          : std::nullopt;
  spec.base_seed = resolve_seed(seed_flag, file_seed);
  if (jobs) spec.jobs = *jobs;

  const std::vector<SweepRow> rows = sweep(spec);
  const std::string csv = sweep_csv(rows);
  write_text_file(out_path, csv);
  std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
  if (emit_gnuplot) {
    const std::string script_path = out_path + ".gp";
    write_text_file(script_path, gnuplot_script(out_path));
    std::cout << "wrote " << script_path << "\n";
  }
  return 0;
}

int cmd_scaling(const std::string& regime_name, int s, double alpha, double c,
                const std::vector<int>& n_grid, long long trials,
                long long m_override, std::optional<std::uint64_t> seed_flag,
                std::optional<int> jobs, const std::string& out_path,
                bool emit_gnuplot) {
  TrialConfig base;
  base.regime = regime_from_string(regime_name);
  base.s = s;
  base.alpha = alpha;
  base.c_const = c;
  base.m_override = m_override;
  const std::uint64_t seed = resolve_seed(seed_flag);

  const ScalingReport report =
      scaling_experiment(base, n_grid, trials, seed, jobs.value_or(1));

  std::cout << "regime: " << regime_name << " s: " << s
            << " alpha: " << format_double(alpha) << " c: " << format_double(c)
            << " trials: " << trials << " seed: " << seed << "\n";
  std::cout << "n,m,pe_hat,ci_low,ci_high\n";
  for (const SweepRow& row : report.rows) {
    std::cout << row.config.n << "," << row.m << ","
              << format_double(row.estimate.p_e_hat) << ","
              << format_double(row.estimate.ci_low) << ","
              << format_double(row.estimate.ci_high) << "\n";
  }
  std::cout << "decay_observed: " << bool_str(report.decay_observed) << "\n";

  if (!out_path.empty()) {
    write_text_file(out_path, sweep_csv(report.rows));
    if (emit_gnuplot)
      write_text_file(out_path + ".gp", gnuplot_script(out_path));
  }
  return 0;
}

int cmd_thresholds(const std::vector<int>& n_values, int s, double alpha,
                   double c) {
  std::cout << "n,s,alpha,c,m_full_knowledge,m_structure_only,m_independent,"
               "delta_n,structure_only_radius\n";
  for (int n : n_values) {
    std::cout << n << "," << s << "," << format_double(alpha) << ","
              << format_double(c) << ","
              << required_m(n, s, alpha, c, Regime::full_knowledge) << ","
              << required_m(n, s, alpha, c, Regime::structure_only) << ","
              << required_m(n, s, alpha, c, Regime::independent) << ","
              << format_double(delta_n(n, s, alpha)) << ","
              << format_double(structure_only_radius(n, s, alpha)) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Statistical matching attack on anonymized Gaussian traces"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate",
                                 "Sample a population and anonymized traces");
  std::string gen_config, gen_out = "out";
  std::optional<std::uint64_t> gen_seed;
  bool gen_emit_perm = false;
  gen->add_option("--config", gen_config, "key = value generator config")
      ->required();
  gen->add_option("--out", gen_out, "output path prefix");
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_flag("--emit-perm", gen_emit_perm,
                "also write the ground-truth permutation");

  // attack
  auto* atk = app.add_subcommand("attack", "Run one attack on stored traces");
  std::string atk_traces, atk_knowledge, atk_perm, atk_regime = "full_knowledge";
  double atk_alpha = 1.0, atk_exponent = -0.2;
  int atk_target = 0, atk_cap = 8;
  atk->add_option("--traces", atk_traces, "anonymized trace file")->required();
  atk->add_option("--knowledge", atk_knowledge, "population file")->required();
  atk->add_option("--perm", atk_perm, "ground-truth permutation for scoring");
  atk->add_option("--regime", atk_regime,
                  "full_knowledge | structure_only | independent");
  atk->add_option("--alpha", atk_alpha, "radius exponent offset");
  atk->add_option("--target", atk_target, "target user index");
  atk->add_option("--threshold-exponent", atk_exponent,
                  "edge threshold exponent on m");
  atk->add_option("--max-group-size", atk_cap, "exhaustive matching cap");

  // sweep
  auto* swp = app.add_subcommand("sweep", "Monte Carlo grid to CSV");
  std::string swp_spec, swp_out = "sweep.csv";
  std::optional<std::uint64_t> swp_seed;
  std::optional<int> swp_jobs;
  bool swp_gnuplot = false;
  swp->add_option("--spec", swp_spec, "sweep spec file")->required();
  swp->add_option("--out", swp_out, "output CSV path");
  swp->add_option("--seed", swp_seed, "overrides the spec seed");
  swp->add_option("--jobs", swp_jobs, "worker pool width");
  swp->add_flag("--emit-gnuplot", swp_gnuplot, "write a companion .gp script");

  // scaling
  auto* scl = app.add_subcommand("scaling", "Decay experiment over an n grid");
  std::string scl_regime = "full_knowledge", scl_out;
  int scl_s = 2;
  double scl_alpha = 1.0, scl_c = 1.0;
  std::vector<int> scl_n;
  long long scl_trials = 200, scl_m_override = 0;
  std::optional<std::uint64_t> scl_seed;
  std::optional<int> scl_jobs;
  bool scl_gnuplot = false;
  scl->add_option("--regime", scl_regime,
                  "full_knowledge | structure_only | independent");
  scl->add_option("--s", scl_s, "group size");
  scl->add_option("--alpha", scl_alpha, "exponent offset");
  scl->add_option("--c", scl_c, "constant in m = ceil(c n^e)");
  scl->add_option("--n", scl_n, "increasing n grid (comma separated)")
      ->required()
      ->delimiter(',');
  scl->add_option("--trials", scl_trials, "trials per cell");
  scl->add_option("--m-override", scl_m_override, "fixed m for all cells");
  scl->add_option("--seed", scl_seed, "RNG seed");
  scl->add_option("--jobs", scl_jobs, "worker pool width");
  scl->add_option("--out", scl_out, "also write rows to this CSV");
  scl->add_flag("--emit-gnuplot", scl_gnuplot, "write a companion .gp script");

  // thresholds
  auto* thr = app.add_subcommand("thresholds",
                                 "Print required_m and radius tables");
  std::vector<int> thr_n;
  int thr_s = 2;
  double thr_alpha = 1.0, thr_c = 1.0;
  thr->add_option("--n", thr_n, "n values (comma separated)")
      ->required()
      ->delimiter(',');
  thr->add_option("--s", thr_s, "group size");
  thr->add_option("--alpha", thr_alpha, "exponent offset");
  thr->add_option("--c", thr_c, "constant in m = ceil(c n^e)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(gen_config, gen_out, gen_seed, gen_emit_perm);
    if (atk->parsed())
      return cmd_attack(atk_traces, atk_knowledge, atk_perm, atk_regime,
                        atk_alpha, atk_target, atk_exponent, atk_cap);
    if (swp->parsed())
      return cmd_sweep(swp_spec, swp_out, swp_seed, swp_jobs, swp_gnuplot);
    if (scl->parsed())
      return cmd_scaling(scl_regime, scl_s, scl_alpha, scl_c, scl_n, scl_trials,
                         scl_m_override, scl_seed, scl_jobs, scl_out,
                         scl_gnuplot);
    if (thr->parsed()) return cmd_thresholds(thr_n, thr_s, thr_alpha, thr_c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
