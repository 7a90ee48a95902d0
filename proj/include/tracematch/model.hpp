#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tracematch {

// Canonical undirected edge: first < second.
using Edge = std::pair<int, int>;

inline Edge make_edge(int u, int v) {
  if (u == v)
    throw std::invalid_argument("edge (" + std::to_string(u) + ", " +
                                std::to_string(v) + ") is a self-loop");
  return u < v ? Edge{u, v} : Edge{v, u};
}

enum class Regime { full_knowledge, structure_only, independent };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::full_knowledge: return "full_knowledge";
    case Regime::structure_only: return "structure_only";
    case Regime::independent: return "independent";
  }
  throw std::logic_error("unreachable regime value");
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "full_knowledge") return Regime::full_knowledge;
  if (s == "structure_only") return Regime::structure_only;
  if (s == "independent") return Regime::independent;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

// Partition of users {0..n-1} into groups, plus the intra-group edges.
// Invariants enforced on construction: groups partition the user set, every
// edge joins two users of the same group, and each group is connected by its
// own edges.
struct AssociationGraph {
  int n = 0;
  std::vector<std::vector<int>> groups;
  std::vector<Edge> edges;

  AssociationGraph() = default;

  AssociationGraph(int num_users, std::vector<std::vector<int>> groups_in,
                   std::vector<Edge> edges_in)
      : n(num_users), groups(std::move(groups_in)), edges(std::move(edges_in)) {
    if (n < 1) throw std::invalid_argument("graph needs at least one user");
    group_of_.assign(n, -1);
    for (int g = 0; g < static_cast<int>(groups.size()); ++g) {
      if (groups[g].empty()) throw std::invalid_argument("empty group");
      for (int u : groups[g]) {
        if (u < 0 || u >= n)
          throw std::invalid_argument("user " + std::to_string(u) +
                                      " out of range");
        if (group_of_[u] != -1)
          throw std::invalid_argument("user " + std::to_string(u) +
                                      " appears in two groups");
        group_of_[u] = g;
      }
    }
    for (int u = 0; u < n; ++u)
      if (group_of_[u] == -1)
        throw std::invalid_argument("user " + std::to_string(u) +
                                    " missing from all groups");
    std::map<Edge, bool> seen;
    for (const Edge& e : edges) {
      Edge c = make_edge(e.first, e.second);
      if (c != e) throw std::invalid_argument("edge not in canonical order");
      if (e.second >= n) throw std::invalid_argument("edge endpoint out of range");
      if (group_of_[e.first] != group_of_[e.second])
        throw std::invalid_argument("edge (" + std::to_string(e.first) + ", " +
                                    std::to_string(e.second) +
                                    ") crosses groups");
      if (seen.count(e)) throw std::invalid_argument("duplicate edge");
      seen[e] = true;
    }
    for (const auto& group : groups) check_connected(group, seen);
  }

  int group_of(int u) const {
    if (u < 0 || u >= n) throw std::out_of_range("user index out of range");
    return group_of_[u];
  }

  int num_groups() const { return static_cast<int>(groups.size()); }

 private:
  void check_connected(const std::vector<int>& group,
                       const std::map<Edge, bool>& edge_set) const {
    if (group.size() <= 1) return;
    std::map<int, int> pos;
    for (int i = 0; i < static_cast<int>(group.size()); ++i) pos[group[i]] = i;
    std::vector<bool> reached(group.size(), false);
    std::vector<int> stack{0};
    reached[0] = true;
    while (!stack.empty()) {
      int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < static_cast<int>(group.size()); ++j) {
        if (reached[j]) continue;
        if (edge_set.count(make_edge(group[i], group[j]))) {
          reached[j] = true;
          stack.push_back(j);
        }
      }
    }
    for (bool r : reached)
      if (!r) throw std::invalid_argument("group is not connected by its edges");
  }

  std::vector<int> group_of_;
};

// Population parameters: per-user means, per-edge correlations, common
// variance. Means are strictly inside (0, 1); correlations are nonzero on
// exactly the graph edges. Positive semi-definiteness of the per-group
// covariance blocks is enforced where the blocks are assembled, see
// build_covariance.
struct PopulationParams {
  AssociationGraph graph;
  std::vector<double> means;
  std::map<Edge, double> rho;
  double sigma2 = 1.0;

  PopulationParams() = default;

  PopulationParams(AssociationGraph g, std::vector<double> means_in,
                   std::map<Edge, double> rho_in, double sigma2_in)
      : graph(std::move(g)),
        means(std::move(means_in)),
        rho(std::move(rho_in)),
        sigma2(sigma2_in) {
    if (static_cast<int>(means.size()) != graph.n)
      throw std::invalid_argument("means length must equal user count");
    for (double mu : means)
      if (!(mu > 0.0 && mu < 1.0))
        throw std::invalid_argument("means must lie strictly inside (0, 1)");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
    if (rho.size() != graph.edges.size())
      throw std::invalid_argument("rho must be defined on exactly the edges");
    for (const Edge& e : graph.edges) {
      auto it = rho.find(e);
      if (it == rho.end())
        throw std::invalid_argument("edge (" + std::to_string(e.first) + ", " +
                                    std::to_string(e.second) + ") has no rho");
      if (it->second == 0.0 || !(std::abs(it->second) <= 1.0))
        throw std::invalid_argument("rho values must be nonzero with |rho| <= 1");
    }
  }

  int n() const { return graph.n; }

  double correlation(int u, int v) const {
    if (u == v) return 1.0;
    auto it = rho.find(make_edge(u, v));
    return it == rho.end() ? 0.0 : it->second;
  }

  // Cross second moment mu_{uv} = rho_{uv} sigma^2 + mu_u mu_v.
  double second_moment(int u, int v) const {
    return correlation(u, v) * sigma2 + means[u] * means[v];
  }
};

// Row-major n x m matrix of observations; row u is user u's trace.
struct TraceMatrix {
  TraceMatrix() = default;

  TraceMatrix(int num_users, long long num_observations)
      : n(num_users), m(num_observations) {
    if (n < 0 || m < 0) throw std::invalid_argument("negative trace dimensions");
    data.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(m), 0.0);
  }

  std::span<double> row(int u) {
    check_row(u);
    return {data.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m)};
  }

  std::span<const double> row(int u) const {
    check_row(u);
    return {data.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m)};
  }

  int n = 0;
  long long m = 0;
  std::vector<double> data;

 private:
  void check_row(int u) const {
    if (u < 0 || u >= n) throw std::out_of_range("row index out of range");
  }
};

struct TraceSet : TraceMatrix {
  using TraceMatrix::TraceMatrix;
};

struct AnonymizedTraceSet : TraceMatrix {
  using TraceMatrix::TraceMatrix;
};

// Bijection on {0..n-1}; forward[u] is the anonymized index of user u.
struct Permutation {
  std::vector<int> forward;
  std::vector<int> inverse;

  static Permutation from_forward(std::vector<int> f) {
    Permutation p;
    const int n = static_cast<int>(f.size());
    p.inverse.assign(n, -1);
    for (int u = 0; u < n; ++u) {
      int v = f[u];
      if (v < 0 || v >= n || p.inverse[v] != -1)
        throw std::invalid_argument("forward map is not a permutation");
      p.inverse[v] = u;
    }
    p.forward = std::move(f);
    return p;
  }

  static Permutation identity(int n) {
    std::vector<int> f(n);
    for (int u = 0; u < n; ++u) f[u] = u;
    return from_forward(std::move(f));
  }

  int size() const { return static_cast<int>(forward.size()); }
};

// Group fingerprint: the s member means followed by the s(s-1)/2 cross second
// moments of the strict upper triangle, row-major. Flattened length s(s+1)/2.
struct Fingerprint {
  int size = 0;
  std::vector<double> means;
  std::vector<double> second_moments;

  Fingerprint() = default;

  explicit Fingerprint(int s)
      : size(s), means(s, 0.0), second_moments(pair_count(s), 0.0) {
    if (s < 1) throw std::invalid_argument("fingerprint needs size >= 1");
  }

  static int pair_count(int s) { return s * (s - 1) / 2; }

  // Index of ordered pair (i, j), i < j, in the strict upper triangle.
  static int pair_index(int s, int i, int j) {
    if (i < 0 || j >= s || i >= j) throw std::out_of_range("bad pair index");
    return i * s - i * (i + 1) / 2 + (j - i - 1);
  }

  double pair(int i, int j) const {
    if (i > j) std::swap(i, j);
    return second_moments[pair_index(size, i, j)];
  }

  double& pair_ref(int i, int j) {
    if (i > j) std::swap(i, j);
    return second_moments[pair_index(size, i, j)];
  }

  std::vector<double> flattened() const {
    std::vector<double> out(means);
    out.insert(out.end(), second_moments.begin(), second_moments.end());
    return out;
  }
};

struct AttackConfig {
  double alpha = 1.0;
  double c_const = 1.0;
  Regime regime = Regime::full_knowledge;
  double edge_threshold_exponent = -0.2;
  int max_group_size_for_matching = 8;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (!(c_const > 0.0)) throw std::invalid_argument("c must be positive");
    if (!(edge_threshold_exponent < 0.0))
      throw std::invalid_argument("edge threshold exponent must be negative");
    if (max_group_size_for_matching < 1)
      throw std::invalid_argument("matching size cap must be >= 1");
  }
};

// Matching radius for the full-knowledge fingerprint test.
inline double delta_n(long long n, int s, double alpha) {
  if (n < 1 || s < 1 || !(alpha > 0.0))
    throw std::domain_error("delta_n requires n >= 1, s >= 1, alpha > 0");
  const double e = -2.0 / (s * (s + 1)) - alpha / 4.0;
  return std::pow(static_cast<double>(n), e);
}

// Matching radius for the means-only (structure_only) test; the exponent is
// the same construction with fingerprint length s instead of s(s+1)/2.
inline double structure_only_radius(long long n, int s, double alpha) {
  if (n < 1 || s < 1 || !(alpha > 0.0))
    throw std::domain_error("radius requires n >= 1, s >= 1, alpha > 0");
  const double e = -1.0 / s - alpha / 4.0;
  return std::pow(static_cast<double>(n), e);
}

inline double regime_exponent(Regime regime, int s, double alpha) {
  if (s < 1 || !(alpha >= 0.0))
    throw std::domain_error("exponent requires s >= 1, alpha >= 0");
  switch (regime) {
    case Regime::full_knowledge: return 4.0 / (s * (s + 1)) + alpha;
    case Regime::structure_only: return 2.0 / s + alpha;
    case Regime::independent: return 2.0 + alpha;
  }
  throw std::logic_error("unreachable regime value");
}

// Observations needed for the target error decay: ceil(c * n^e). alpha = 0 is
// accepted here so the bare exponents can be inspected.
inline long long required_m(long long n, int s, double alpha, double c,
                            Regime regime) {
  if (n < 1 || !(c > 0.0))
    throw std::domain_error("required_m requires n >= 1, c > 0");
  const double e = regime_exponent(regime, s, alpha);
  const double v = c * std::pow(static_cast<double>(n), e);
  if (!(v < 9.2e18)) throw std::domain_error("required_m overflows 64 bits");
  return static_cast<long long>(std::ceil(v));
}

// Covariance magnitude above which an edge is declared: m^exponent.
inline double edge_threshold(long long m, double exponent = -0.2) {
  if (m < 1) throw std::domain_error("edge_threshold requires m >= 1");
  return std::pow(static_cast<double>(m), exponent);
}

}  // namespace tracematch
