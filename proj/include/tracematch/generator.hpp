#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracematch/model.hpp"
#include "tracematch/rng.hpp"

namespace tracematch {

enum class Topology { complete_group, spanning_tree_plus };

inline std::string to_string(Topology t) {
  switch (t) {
    case Topology::complete_group: return "complete_group";
    case Topology::spanning_tree_plus: return "spanning_tree_plus";
  }
  throw std::logic_error("unreachable topology value");
}

inline Topology topology_from_string(const std::string& s) {
  if (s == "complete_group") return Topology::complete_group;
  if (s == "spanning_tree_plus") return Topology::spanning_tree_plus;
  throw std::invalid_argument("unknown topology '" + s + "'");
}

struct GeneratorConfig {
  int n = 0;
  std::vector<int> group_sizes;  // must sum to n
  double rho_lo = 0.4;
  double rho_hi = 0.8;
  double mean_lo = 0.0;  // means drawn on the open interval (mean_lo, mean_hi)
  double mean_hi = 1.0;
  double sigma2 = 1.0;
  Topology topology = Topology::complete_group;
  double psd_min_eigenvalue = 1e-9;
  int max_psd_retries = 100;
  // spanning_tree_plus only: chance of keeping each non-tree pair.
  double extra_edge_prob = 0.25;
  // Off by default; random sign per edge when set. Makes PSD rejection much
  // more likely for s >= 3.
  bool allow_negative_rho = false;

  void validate() const {
    if (n < 1) throw std::invalid_argument("generator needs n >= 1");
    if (group_sizes.empty())
      throw std::invalid_argument("group_sizes must be nonempty");
    long long total = 0;
    for (int s : group_sizes) {
      if (s < 1) throw std::invalid_argument("group sizes must be positive");
      total += s;
    }
    if (total != n)
      throw std::invalid_argument("group sizes sum to " + std::to_string(total) +
                                  ", expected n = " + std::to_string(n));
    if (!(rho_lo > 0.0 && rho_lo <= rho_hi && rho_hi < 1.0))
      throw std::invalid_argument("rho range must satisfy 0 < lo <= hi < 1");
    if (!(mean_lo >= 0.0 && mean_lo < mean_hi && mean_hi <= 1.0))
      throw std::invalid_argument("mean interval must sit inside (0, 1)");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
    if (!(psd_min_eigenvalue > 0.0))
      throw std::invalid_argument("psd_min_eigenvalue must be positive");
    if (max_psd_retries < 0)
      throw std::invalid_argument("max_psd_retries must be >= 0");
    if (!(extra_edge_prob >= 0.0 && extra_edge_prob <= 1.0))
      throw std::invalid_argument("extra_edge_prob must be in [0, 1]");
  }
};

// Groups of size s; a final smaller group takes any remainder.
inline std::vector<int> uniform_group_sizes(int n, int s) {
  if (n < 1 || s < 1 || s > n)
    throw std::invalid_argument("uniform_group_sizes needs 1 <= s <= n");
  std::vector<int> sizes(n / s, s);
  if (n % s != 0) sizes.push_back(n % s);
  return sizes;
}

class PSDRetryExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FactorizationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Covariance block of one group, in the group's member order.
inline Eigen::MatrixXd group_block(const PopulationParams& p,
                                   const std::vector<int>& group) {
  const int s = static_cast<int>(group.size());
  Eigen::MatrixXd block(s, s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      block(i, j) = p.correlation(group[i], group[j]) * p.sigma2;
  return block;
}

// Full n x n covariance: sigma^2 on the diagonal, rho * sigma^2 on edges,
// zero elsewhere. Block-diagonal under any group-contiguous ordering.
inline Eigen::MatrixXd build_covariance(const PopulationParams& p) {
  const int n = p.n();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(n, n);
  for (int u = 0; u < n; ++u) sigma(u, u) = p.sigma2;
  for (const auto& [edge, rho] : p.rho) {
    sigma(edge.first, edge.second) = rho * p.sigma2;
    sigma(edge.second, edge.first) = rho * p.sigma2;
  }
  return sigma;
}

inline double min_eigenvalue(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym,
                                                        Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw FactorizationFailure("eigenvalue computation did not converge");
  return solver.eigenvalues().minCoeff();
}

// Smallest eigenvalue over all group covariance blocks.
inline double min_block_eigenvalue(const PopulationParams& p) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& group : p.graph.groups)
    lo = std::min(lo, min_eigenvalue(group_block(p, group)));
  return lo;
}

namespace detail {

// Edges of one group laid out by the configured topology, canonical order.
inline std::vector<Edge> sample_group_edges(const std::vector<int>& group,
                                            Topology topology,
                                            double extra_edge_prob, Rng& rng) {
  const int s = static_cast<int>(group.size());
  std::vector<Edge> edges;
  if (s < 2) return edges;
  if (topology == Topology::complete_group) {
    for (int i = 0; i < s; ++i)
      for (int j = i + 1; j < s; ++j) edges.push_back(make_edge(group[i], group[j]));
    return edges;
  }
  // Random spanning tree: each vertex attaches to an earlier one. Remaining
  // pairs are kept independently with extra_edge_prob.
  std::vector<std::vector<bool>> present(s, std::vector<bool>(s, false));
  for (int i = 1; i < s; ++i) {
    int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(i)));
    present[parent][i] = true;
  }
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j) {
      if (present[i][j]) continue;
      if (rng.uniform01() < extra_edge_prob) present[i][j] = true;
    }
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j)
      if (present[i][j]) edges.push_back(make_edge(group[i], group[j]));
  return edges;
}

}  // namespace detail

// Samples means, topology, and correlations. Each group's rho values are
// rejection-resampled until its covariance block has min eigenvalue >= eps;
// independent rho draws alone can be non-PSD for s >= 3.
inline PopulationParams sample_population(const GeneratorConfig& cfg,
                                          std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  std::vector<double> means(cfg.n);
  for (int u = 0; u < cfg.n; ++u)
    means[u] = rng.uniform_open(cfg.mean_lo, cfg.mean_hi);

  std::vector<std::vector<int>> groups;
  int next = 0;
  for (int size : cfg.group_sizes) {
    std::vector<int> group(size);
    for (int i = 0; i < size; ++i) group[i] = next++;
    groups.push_back(std::move(group));
  }

  std::vector<Edge> all_edges;
  std::map<Edge, double> rho;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    const int s = static_cast<int>(group.size());
    auto edges = detail::sample_group_edges(group, cfg.topology,
                                            cfg.extra_edge_prob, rng);
    bool accepted = edges.empty();
    std::map<Edge, double> group_rho;
    for (int attempt = 0; attempt <= cfg.max_psd_retries && !accepted;
         ++attempt) {
      group_rho.clear();
      for (const Edge& e : edges) {
        double value = rng.uniform(cfg.rho_lo, cfg.rho_hi);
        if (cfg.allow_negative_rho && rng.uniform01() < 0.5) value = -value;
        group_rho[e] = value;
      }
      Eigen::MatrixXd block(s, s);
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
          if (i == j) {
            block(i, j) = cfg.sigma2;
          } else {
            Edge e = make_edge(group[i], group[j]);
            auto it = group_rho.find(e);
            block(i, j) = it == group_rho.end() ? 0.0 : it->second * cfg.sigma2;
          }
        }
      if (min_eigenvalue(block) >= cfg.psd_min_eigenvalue) accepted = true;
    }
    if (!accepted)
      throw PSDRetryExhausted(
          "group " + std::to_string(g) + " (size " + std::to_string(s) +
          "): no PSD block after " + std::to_string(cfg.max_psd_retries + 1) +
          " draws from rho range [" + std::to_string(cfg.rho_lo) + ", " +
          std::to_string(cfg.rho_hi) + "]");
    all_edges.insert(all_edges.end(), edges.begin(), edges.end());
    rho.insert(group_rho.begin(), group_rho.end());
  }

  return PopulationParams(AssociationGraph(cfg.n, std::move(groups),
                                           std::move(all_edges)),
                          std::move(means), std::move(rho), cfg.sigma2);
}

// Draws m i.i.d. columns of N(mu, Sigma). Each group block is factored once
// (Cholesky) and reused for every time step; groups use independent
// seed-derived streams, so output does not depend on group processing order.
inline TraceSet sample_traces(const PopulationParams& p, long long m,
                              std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("sample_traces needs m >= 1");
  TraceSet traces(p.n(), m);
  for (std::size_t g = 0; g < p.graph.groups.size(); ++g) {
    const auto& group = p.graph.groups[g];
    const int s = static_cast<int>(group.size());
    Eigen::MatrixXd block = group_block(p, group);
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success)
      throw FactorizationFailure("group " + std::to_string(g) +
                                 ": covariance block is not positive definite");
    Eigen::MatrixXd lower = llt.matrixL();

    // Row-major copy of the factor's lower triangle for the inner loop.
    std::vector<double> factor(static_cast<std::size_t>(s) * s, 0.0);
    for (int i = 0; i < s; ++i)
      for (int j = 0; j <= i; ++j)
        factor[static_cast<std::size_t>(i) * s + j] = lower(i, j);

    std::vector<double*> rows(s);
    std::vector<double> mu(s);
    for (int i = 0; i < s; ++i) {
      rows[i] = traces.row(group[i]).data();
      mu[i] = p.means[group[i]];
    }

    Rng rng(derive_seed(seed, g));
    std::vector<double> z(s);
    for (long long k = 0; k < m; ++k) {
      for (int i = 0; i < s; ++i) z[i] = rng.normal();
      for (int i = 0; i < s; ++i) {
        double acc = mu[i];
        const double* f = factor.data() + static_cast<std::size_t>(i) * s;
        for (int j = 0; j <= i; ++j) acc += f[j] * z[j];
        rows[i][k] = acc;
      }
    }
  }
  return traces;
}

}  // namespace tracematch
