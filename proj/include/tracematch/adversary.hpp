#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracematch/model.hpp"
#include "tracematch/union_find.hpp"

#if defined(__GNUC__) || defined(__clang__)
#define TRACEMATCH_NOINLINE __attribute__((noinline))
#else
#define TRACEMATCH_NOINLINE
#endif

namespace tracematch {

namespace detail {

// Rows are reduced in fixed-size chunks by kernels with a fixed accumulator
// grouping, compiled exactly once (noinline). Every caller therefore gets
// bit-identical sums for identical row contents, independent of row position,
// tiling, or call site; graph reconstruction is exactly permutation
// equivariant because of this.
constexpr std::size_t kChunk = 2048;

TRACEMATCH_NOINLINE inline double chunk_sum(const double* a, std::size_t len) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    s0 += a[k];
    s1 += a[k + 1];
    s2 += a[k + 2];
    s3 += a[k + 3];
  }
  for (; k < len; ++k) s0 += a[k];
  return (s0 + s1) + (s2 + s3);
}

TRACEMATCH_NOINLINE inline double chunk_dot(const double* a, const double* b,
                                            std::size_t len) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < len; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

inline double sum_values(std::span<const double> v) {
  double total = 0.0;
  for (std::size_t off = 0; off < v.size(); off += kChunk)
    total += chunk_sum(v.data() + off, std::min(kChunk, v.size() - off));
  return total;
}

inline double dot_values(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t off = 0; off < a.size(); off += kChunk)
    total += chunk_dot(a.data() + off, b.data() + off,
                       std::min(kChunk, a.size() - off));
  return total;
}

inline int upper_index(int n, int u, int v) {
  return u * n - u * (u + 1) / 2 + (v - u - 1);
}

}  // namespace detail

inline double empirical_mean(std::span<const double> row) {
  if (row.empty()) throw std::invalid_argument("empirical_mean: empty row");
  return detail::sum_values(row) / static_cast<double>(row.size());
}

// S_uv / m.
inline double empirical_second_moment(std::span<const double> a,
                                      std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("second moment: row length mismatch");
  if (a.empty()) throw std::invalid_argument("second moment: empty rows");
  return detail::dot_values(a, b) / static_cast<double>(a.size());
}

// Biased estimator S_uv/m - (S_u/m)(S_v/m); the 1/m normalization is the
// contract, not 1/(m-1).
inline double empirical_covariance(std::span<const double> a,
                                   std::span<const double> b) {
  return empirical_second_moment(a, b) - empirical_mean(a) * empirical_mean(b);
}

struct ReconstructedGraph {
  std::vector<Edge> edges;               // canonical pairs, lexicographic
  std::vector<std::vector<int>> groups;  // components, ordered by least member
};

// Declares edge (u,v) iff |empirical_covariance(row_u, row_v)| >= threshold,
// then splits into connected components. Pairwise second moments are computed
// in row tiles and column chunks; each pair still accumulates its chunks in
// ascending order, so values match empirical_covariance bit for bit.
inline ReconstructedGraph reconstruct_graph(const AnonymizedTraceSet& y,
                                            double threshold) {
  if (y.n < 1 || y.m < 1)
    throw std::invalid_argument("reconstruct_graph: empty trace set");
  if (!(threshold > 0.0))
    throw std::invalid_argument("reconstruct_graph: threshold must be positive");
  const int n = y.n;
  const std::size_t m = static_cast<std::size_t>(y.m);

  std::vector<double> mean(n);
  for (int u = 0; u < n; ++u) mean[u] = empirical_mean(y.row(u));

  std::vector<double> second(static_cast<std::size_t>(n) * (n - 1) / 2, 0.0);
  constexpr int kTile = 12;
  for (int ub = 0; ub < n; ub += kTile) {
    const int uend = std::min(ub + kTile, n);
    for (int vb = ub; vb < n; vb += kTile) {
      const int vend = std::min(vb + kTile, n);
      for (std::size_t off = 0; off < m; off += detail::kChunk) {
        const std::size_t len = std::min(detail::kChunk, m - off);
        for (int u = ub; u < uend; ++u) {
          const double* ru = y.row(u).data() + off;
          for (int v = std::max(vb, u + 1); v < vend; ++v) {
            const double* rv = y.row(v).data() + off;
            second[detail::upper_index(n, u, v)] +=
                detail::chunk_dot(ru, rv, len);
          }
        }
      }
    }
  }

  ReconstructedGraph rg;
  UnionFind uf(n);
  const double md = static_cast<double>(y.m);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) {
      const double cov =
          second[detail::upper_index(n, u, v)] / md - mean[u] * mean[v];
      if (std::abs(cov) >= threshold) {
        rg.edges.emplace_back(u, v);
        uf.unite(u, v);
      }
    }

  std::vector<int> component_of_root(n, -1);
  for (int u = 0; u < n; ++u) {
    int root = uf.find(u);
    if (component_of_root[root] == -1) {
      component_of_root[root] = static_cast<int>(rg.groups.size());
      rg.groups.emplace_back();
    }
    rg.groups[component_of_root[root]].push_back(u);
  }
  return rg;
}

// Fingerprint of a group from known parameters: member means, then the cross
// second moments rho*sigma^2 + mu_u*mu_v (rho = 0 for in-group non-edges).
inline Fingerprint true_fingerprint(const PopulationParams& p,
                                    const std::vector<int>& group) {
  const auto& groups = p.graph.groups;
  if (std::find(groups.begin(), groups.end(), group) == groups.end())
    throw std::invalid_argument("true_fingerprint: not a group of this graph");
  const int s = static_cast<int>(group.size());
  Fingerprint fp(s);
  for (int i = 0; i < s; ++i) fp.means[i] = p.means[group[i]];
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j)
      fp.pair_ref(i, j) = p.second_moment(group[i], group[j]);
  return fp;
}

inline Fingerprint empirical_fingerprint(const TraceMatrix& y,
                                         const std::vector<int>& members) {
  const int s = static_cast<int>(members.size());
  if (s < 1) throw std::invalid_argument("empirical_fingerprint: no members");
  for (int i = 0; i < s; ++i) {
    if (members[i] < 0 || members[i] >= y.n)
      throw std::out_of_range("empirical_fingerprint: index out of range");
    for (int j = i + 1; j < s; ++j)
      if (members[i] == members[j])
        throw std::invalid_argument("empirical_fingerprint: duplicate member");
  }
  Fingerprint fp(s);
  for (int i = 0; i < s; ++i) fp.means[i] = empirical_mean(y.row(members[i]));
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j)
      fp.pair_ref(i, j) =
          empirical_second_moment(y.row(members[i]), y.row(members[j]));
  return fp;
}

struct FingerprintMatch {
  double distance = std::numeric_limits<double>::quiet_NaN();
  // a's position i corresponds to b's position relabeling[i].
  std::vector<int> relabeling;
};

// min over all s! relabelings pi of the infinity norm between a and
// b-relabeled-by-pi. Exhaustive; ties go to the lexicographically smallest
// pi (next_permutation enumerates in lexicographic order).
inline FingerprintMatch fingerprint_distance(const Fingerprint& a,
                                             const Fingerprint& b,
                                             int max_group_size = 8) {
  if (a.size != b.size)
    throw std::invalid_argument("fingerprint_distance: size mismatch");
  const int s = a.size;
  if (s > max_group_size)
    throw std::invalid_argument(
        "fingerprint_distance: group size " + std::to_string(s) +
        " exceeds the exhaustive matching cap " +
        std::to_string(max_group_size));
  std::vector<int> pi(s);
  std::iota(pi.begin(), pi.end(), 0);
  FingerprintMatch best;
  best.distance = std::numeric_limits<double>::infinity();
  do {
    double d = 0.0;
    for (int i = 0; i < s && d < best.distance; ++i)
      d = std::max(d, std::abs(a.means[i] - b.means[pi[i]]));
    for (int i = 0; i < s && d < best.distance; ++i)
      for (int j = i + 1; j < s; ++j)
        d = std::max(d, std::abs(a.pair(i, j) - b.pair(pi[i], pi[j])));
    if (d < best.distance) {
      best.distance = d;
      best.relabeling = pi;
    }
  } while (std::next_permutation(pi.begin(), pi.end()));
  return best;
}

struct GroupIdentification {
  bool found = false;
  std::vector<int> members;     // anonymized indices, ascending
  std::vector<int> relabeling;  // target position i -> members[relabeling[i]]
  double best_distance = std::numeric_limits<double>::quiet_NaN();
  int candidates_in_radius = 0;
  bool ambiguous = false;  // two or more components inside the radius
};

// Scans reconstructed components of size exactly target.size and keeps the
// one with minimal fingerprint distance, accepting it if the minimum is
// within the radius. Ties keep the earliest component.
inline GroupIdentification identify_group(const Fingerprint& target,
                                          const ReconstructedGraph& rg,
                                          const AnonymizedTraceSet& y,
                                          double radius,
                                          int max_group_size = 8) {
  if (!(radius > 0.0))
    throw std::invalid_argument("identify_group: radius must be positive");
  GroupIdentification out;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& component : rg.groups) {
    if (static_cast<int>(component.size()) != target.size) continue;
    Fingerprint fp = empirical_fingerprint(y, component);
    FingerprintMatch match = fingerprint_distance(target, fp, max_group_size);
    if (match.distance <= radius) ++out.candidates_in_radius;
    if (match.distance < best) {
      best = match.distance;
      out.members = component;
      out.relabeling = std::move(match.relabeling);
    }
  }
  if (std::isfinite(best)) out.best_distance = best;
  out.found = best <= radius;
  out.ambiguous = out.candidates_in_radius >= 2;
  if (!out.found) {
    out.members.clear();
    out.relabeling.clear();
  }
  return out;
}

// Means-only variant: distance is the infinity norm after sorting both mean
// vectors, which equals the min over relabelings for plain vectors.
inline GroupIdentification identify_group_by_means(
    const std::vector<double>& target_means, const ReconstructedGraph& rg,
    const AnonymizedTraceSet& y, double radius) {
  if (!(radius > 0.0))
    throw std::invalid_argument("identify_group: radius must be positive");
  if (target_means.empty())
    throw std::invalid_argument("identify_group: empty target means");
  const int s = static_cast<int>(target_means.size());

  std::vector<int> target_order(s);
  std::iota(target_order.begin(), target_order.end(), 0);
  std::stable_sort(target_order.begin(), target_order.end(),
                   [&](int i, int j) { return target_means[i] < target_means[j]; });

  GroupIdentification out;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& component : rg.groups) {
    if (static_cast<int>(component.size()) != s) continue;
    std::vector<double> means(s);
    for (int i = 0; i < s; ++i) means[i] = empirical_mean(y.row(component[i]));
    std::vector<int> order(s);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return means[i] < means[j]; });
    double d = 0.0;
    for (int k = 0; k < s; ++k)
      d = std::max(d, std::abs(target_means[target_order[k]] -
                               means[order[k]]));
    if (d <= radius) ++out.candidates_in_radius;
    if (d < best) {
      best = d;
      out.members = component;
      out.relabeling.assign(s, -1);
      for (int k = 0; k < s; ++k) out.relabeling[target_order[k]] = order[k];
    }
  }
  if (std::isfinite(best)) out.best_distance = best;
  out.found = best <= radius;
  out.ambiguous = out.candidates_in_radius >= 2;
  if (!out.found) {
    out.members.clear();
    out.relabeling.clear();
  }
  return out;
}

struct UserIdentification {
  bool found = false;
  int index = -1;  // anonymized row index
  double best_distance = std::numeric_limits<double>::quiet_NaN();
  int candidates_in_radius = 0;
  bool ambiguous = false;  // two or more members inside the radius
};

// Picks the member whose empirical mean is nearest the target mean, accepting
// if within the radius. Ties keep the earliest member.
inline UserIdentification identify_user(const std::vector<int>& group_members,
                                        const AnonymizedTraceSet& y,
                                        double target_mean, double radius) {
  if (group_members.empty())
    throw std::invalid_argument("identify_user: no members");
  if (!(radius > 0.0))
    throw std::invalid_argument("identify_user: radius must be positive");
  UserIdentification out;
  double best = std::numeric_limits<double>::infinity();
  for (int member : group_members) {
    const double d = std::abs(empirical_mean(y.row(member)) - target_mean);
    if (d <= radius) ++out.candidates_in_radius;
    if (d < best) {
      best = d;
      out.index = member;
    }
  }
  out.best_distance = best;
  out.found = best <= radius;
  out.ambiguous = out.candidates_in_radius >= 2;
  if (!out.found) out.index = -1;
  return out;
}

struct AdversaryKnowledge {
  Regime regime = Regime::full_knowledge;
  PopulationParams population;
  int target_user = 0;

  void validate() const {
    if (target_user < 0 || target_user >= population.n())
      throw std::invalid_argument("target_user out of range");
  }
};

enum class FailureReason { none, no_group_candidate, no_user_candidate };

inline std::string to_string(FailureReason r) {
  switch (r) {
    case FailureReason::none: return "none";
    case FailureReason::no_group_candidate: return "no_group_candidate";
    case FailureReason::no_user_candidate: return "no_user_candidate";
  }
  throw std::logic_error("unreachable failure reason");
}

struct AttackDiagnostics {
  long long reconstructed_edge_count = -1;  // -1: stage not run
  double group_match_distance = std::numeric_limits<double>::quiet_NaN();
  int group_candidates = -1;
  bool group_ambiguous = false;
  double user_match_distance = std::numeric_limits<double>::quiet_NaN();
  int user_candidates = -1;
  bool user_ambiguous = false;
  long long graph_edge_errors = -1;  // filled by evaluate_against_truth
};

struct AttackResult {
  std::optional<int> identified_index;  // anonymized row claimed as target
  FailureReason failure = FailureReason::none;
  ReconstructedGraph graph;  // empty in the independent regime
  AttackDiagnostics diagnostics;
  int truth_index = -1;  // filled by evaluate_against_truth
  bool success = false;  // filled by evaluate_against_truth

  bool ambiguous() const {
    return diagnostics.group_ambiguous || diagnostics.user_ambiguous;
  }
};

// Full pipeline. Stage failures are recorded in the result, never thrown.
//   full_knowledge: reconstruct graph -> match the target group's fingerprint
//     within delta_n -> match the target's mean within delta_n.
//   structure_only: same reconstruction; group matching on means only with
//     the wider radius n^(-1/s - alpha/4); user stage as above.
//   independent: nearest empirical mean over all rows, no radius test.
inline AttackResult attack(const AnonymizedTraceSet& y,
                           const AdversaryKnowledge& k,
                           const AttackConfig& cfg) {
  cfg.validate();
  k.validate();
  if (k.regime != cfg.regime)
    throw std::invalid_argument("attack: knowledge and config regimes differ");
  if (y.n != k.population.n())
    throw std::invalid_argument("attack: trace rows do not match population");
  if (y.m < 1) throw std::invalid_argument("attack: needs m >= 1");

  AttackResult result;
  const PopulationParams& pop = k.population;
  const double mu_target = pop.means[k.target_user];

  if (cfg.regime == Regime::independent) {
    int best_index = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int v = 0; v < y.n; ++v) {
      const double d = std::abs(empirical_mean(y.row(v)) - mu_target);
      if (d < best) {
        best = d;
        best_index = v;
      }
    }
    result.identified_index = best_index;
    result.diagnostics.user_match_distance = best;
    return result;
  }

  const auto& target_group = pop.graph.groups[pop.graph.group_of(k.target_user)];
  const int s = static_cast<int>(target_group.size());

  const double threshold = edge_threshold(y.m, cfg.edge_threshold_exponent);
  result.graph = reconstruct_graph(y, threshold);
  result.diagnostics.reconstructed_edge_count =
      static_cast<long long>(result.graph.edges.size());

  GroupIdentification group;
  double radius;
  if (cfg.regime == Regime::full_knowledge) {
    radius = delta_n(y.n, s, cfg.alpha);
    group = identify_group(true_fingerprint(pop, target_group), result.graph,
                           y, radius, cfg.max_group_size_for_matching);
  } else {
    radius = structure_only_radius(y.n, s, cfg.alpha);
    std::vector<double> target_means(s);
    for (int i = 0; i < s; ++i) target_means[i] = pop.means[target_group[i]];
    group = identify_group_by_means(target_means, result.graph, y, radius);
  }
  result.diagnostics.group_match_distance = group.best_distance;
  result.diagnostics.group_candidates = group.candidates_in_radius;
  result.diagnostics.group_ambiguous = group.ambiguous;
  if (!group.found) {
    result.failure = FailureReason::no_group_candidate;
    return result;
  }

  UserIdentification user = identify_user(group.members, y, mu_target, radius);
  result.diagnostics.user_match_distance = user.best_distance;
  result.diagnostics.user_candidates = user.candidates_in_radius;
  result.diagnostics.user_ambiguous = user.ambiguous;
  if (!user.found) {
    result.failure = FailureReason::no_user_candidate;
    return result;
  }
  result.identified_index = user.index;
  return result;
}

inline std::vector<Edge> permute_edges(const std::vector<Edge>& edges,
                                       const Permutation& p) {
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (const Edge& e : edges)
    out.push_back(make_edge(p.forward[e.first], p.forward[e.second]));
  std::sort(out.begin(), out.end());
  return out;
}

// |a symmetric-difference b| for canonical sorted edge lists.
inline long long edge_symmetric_difference(const std::vector<Edge>& a,
                                           const std::vector<Edge>& b) {
  long long count = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++i, ++j;
    } else if (a[i] < b[j]) {
      ++count, ++i;
    } else {
      ++count, ++j;
    }
  }
  return count + static_cast<long long>(a.size() - i) +
         static_cast<long long>(b.size() - j);
}

// F1 of edge set a against reference b; 1.0 when both are empty.
inline double edge_set_f1(const std::vector<Edge>& a,
                          const std::vector<Edge>& b) {
  long long tp = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++tp, ++i, ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const long long fp = static_cast<long long>(a.size()) - tp;
  const long long fn = static_cast<long long>(b.size()) - tp;
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

// Scores a result against the generator's ground truth: truth index, success
// flag, and the edge errors of the reconstruction stage if it ran.
inline void evaluate_against_truth(AttackResult& result, const Permutation& pi,
                                   const AssociationGraph& truth,
                                   int target_user) {
  result.truth_index = pi.forward[target_user];
  result.success = result.identified_index.has_value() &&
                   *result.identified_index == result.truth_index;
  if (result.diagnostics.reconstructed_edge_count >= 0)
    result.diagnostics.graph_edge_errors = edge_symmetric_difference(
        result.graph.edges, permute_edges(truth.edges, pi));
}

}  // namespace tracematch
