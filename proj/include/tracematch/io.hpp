#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tracematch/generator.hpp"
#include "tracematch/harness.hpp"
#include "tracematch/model.hpp"
#include "tracematch/union_find.hpp"

namespace tracematch {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, int line, const std::string& message)
      : std::runtime_error(line > 0
                               ? path + ":" + std::to_string(line) + ": " + message
                               : path + ": " + message) {}
};

// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(std::move(current));
      current.clear();
    } else if (ch != '\r') {
      current.push_back(ch);
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  return lines;
}

inline double parse_double_token(const std::string& token,
                                 const std::string& path, int line) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0')
    throw ParseError(path, line, "expected a number, got '" + token + "'");
  return v;
}

inline long long parse_int_token(const std::string& token,
                                 const std::string& path, int line) {
  char* end = nullptr;
  const long long v = std::strtoll(token.c_str(), &end, 10);
  if (end == token.c_str() || *end != '\0')
    throw ParseError(path, line, "expected an integer, got '" + token + "'");
  return v;
}

inline std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trace file: header "n m sigma2", then n lines of m space-separated reals.

inline void write_traces(const TraceMatrix& traces, double sigma2,
                         const std::string& path) {
  std::string out;
  out.reserve(static_cast<std::size_t>(traces.n) *
                  static_cast<std::size_t>(traces.m) * 20 +
              64);
  out += std::to_string(traces.n);
  out += ' ';
  out += std::to_string(traces.m);
  out += ' ';
  out += format_double(sigma2);
  out += '\n';
  for (int u = 0; u < traces.n; ++u) {
    auto row = traces.row(u);
    for (long long k = 0; k < traces.m; ++k) {
      if (k > 0) out += ' ';
      out += format_double(row[k]);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

struct LoadedTraces {
  AnonymizedTraceSet traces;
  double sigma2 = 1.0;
};

inline LoadedTraces read_traces(const std::string& path) {
  const auto lines = detail::split_lines(read_text_file(path));
  if (lines.empty()) throw ParseError(path, 0, "empty trace file");
  const auto header = detail::tokenize(lines[0]);
  if (header.size() != 3)
    throw ParseError(path, 1, "header must be 'n m sigma2'");
  const long long n = detail::parse_int_token(header[0], path, 1);
  const long long m = detail::parse_int_token(header[1], path, 1);
  const double sigma2 = detail::parse_double_token(header[2], path, 1);
  if (n < 1 || m < 1) throw ParseError(path, 1, "n and m must be positive");
  if (!(sigma2 > 0.0)) throw ParseError(path, 1, "sigma2 must be positive");
  if (static_cast<long long>(lines.size()) < n + 1)
    throw ParseError(path, 0,
                     "expected " + std::to_string(n) + " trace rows, found " +
                         std::to_string(lines.size() - 1));
  LoadedTraces loaded{AnonymizedTraceSet(static_cast<int>(n), m), sigma2};
  for (long long u = 0; u < n; ++u) {
    const int line_no = static_cast<int>(u) + 2;
    const std::string& line = lines[u + 1];
    auto row = loaded.traces.row(static_cast<int>(u));
    const char* cursor = line.c_str();
    for (long long k = 0; k < m; ++k) {
      char* end = nullptr;
      const double v = std::strtod(cursor, &end);
      if (end == cursor)
        throw ParseError(path, line_no,
                         "row has fewer than " + std::to_string(m) + " values");
      row[k] = v;
      cursor = end;
    }
    char* end = nullptr;
    std::strtod(cursor, &end);
    if (end != cursor)
      throw ParseError(path, line_no,
                       "row has more than " + std::to_string(m) + " values");
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// Population file: one line of n means, then one "u v rho" line per edge.
// sigma2 travels in the trace file header, so groups are recovered here as
// the connected components of the edge list.

inline void write_population(const PopulationParams& p, const std::string& path) {
  std::string out;
  for (int u = 0; u < p.n(); ++u) {
    if (u > 0) out += ' ';
    out += format_double(p.means[u]);
  }
  out += '\n';
  for (const auto& [edge, rho] : p.rho) {
    out += std::to_string(edge.first);
    out += ' ';
    out += std::to_string(edge.second);
    out += ' ';
    out += format_double(rho);
    out += '\n';
  }
  write_text_file(path, out);
}

inline PopulationParams read_population(const std::string& path, double sigma2) {
  const auto lines = detail::split_lines(read_text_file(path));
  if (lines.empty()) throw ParseError(path, 0, "empty population file");
  std::vector<double> means;
  for (const auto& tok : detail::tokenize(lines[0]))
    means.push_back(detail::parse_double_token(tok, path, 1));
  if (means.empty()) throw ParseError(path, 1, "no means found");
  const int n = static_cast<int>(means.size());

  std::map<Edge, double> rho;
  UnionFind uf(n);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    const auto tokens = detail::tokenize(lines[i]);
    if (tokens.empty()) continue;
    if (tokens.size() != 3)
      throw ParseError(path, line_no, "edge line must be 'u v rho'");
    const long long u = detail::parse_int_token(tokens[0], path, line_no);
    const long long v = detail::parse_int_token(tokens[1], path, line_no);
    if (u < 0 || u >= n || v < 0 || v >= n || u == v)
      throw ParseError(path, line_no, "bad edge endpoints");
    const Edge e = make_edge(static_cast<int>(u), static_cast<int>(v));
    if (rho.count(e)) throw ParseError(path, line_no, "duplicate edge");
    rho[e] = detail::parse_double_token(tokens[2], path, line_no);
    uf.unite(e.first, e.second);
  }

  std::vector<std::vector<int>> groups;
  std::map<int, int> component_of_root;
  for (int u = 0; u < n; ++u) {
    const int root = uf.find(u);
    auto it = component_of_root.find(root);
    if (it == component_of_root.end()) {
      component_of_root[root] = static_cast<int>(groups.size());
      groups.emplace_back();
      it = component_of_root.find(root);
    }
    groups[it->second].push_back(u);
  }
  std::vector<Edge> edges;
  for (const auto& [edge, value] : rho) edges.push_back(edge);

  try {
    PopulationParams p(AssociationGraph(n, std::move(groups), std::move(edges)),
                       std::move(means), std::move(rho), sigma2);
    // Round-tripped parameters may sit a hair below the generator's margin.
    if (min_block_eigenvalue(p) < -1e-9)
      throw std::invalid_argument("a group covariance block is not PSD");
    return p;
  } catch (const std::invalid_argument& e) {
    throw ParseError(path, 0, e.what());
  }
}

// ---------------------------------------------------------------------------
// Permutation file: one line of n integers, the forward map.

inline void write_permutation(const Permutation& p, const std::string& path) {
  std::string out;
  for (int u = 0; u < p.size(); ++u) {
    if (u > 0) out += ' ';
    out += std::to_string(p.forward[u]);
  }
  out += '\n';
  write_text_file(path, out);
}

inline Permutation read_permutation(const std::string& path) {
  const auto lines = detail::split_lines(read_text_file(path));
  if (lines.empty()) throw ParseError(path, 0, "empty permutation file");
  std::vector<int> forward;
  for (const auto& tok : detail::tokenize(lines[0]))
    forward.push_back(
        static_cast<int>(detail::parse_int_token(tok, path, 1)));
  try {
    return Permutation::from_forward(std::move(forward));
  } catch (const std::invalid_argument& e) {
    throw ParseError(path, 1, e.what());
  }
}

// ---------------------------------------------------------------------------
// Sweep CSV. Header and formatting are pinned so reruns diff cleanly: 17
// significant digits, LF endings, one row per cell in sweep order.

inline const char* sweep_csv_header() {
  return "regime,n,s,alpha,c,m,trials,failures,pe_hat,ci_low,ci_high,"
         "ambiguity_rate,seed";
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out(sweep_csv_header());
  out += '\n';
  for (const SweepRow& row : rows) {
    out += to_string(row.config.regime);
    out += ',';
    out += std::to_string(row.config.n);
    out += ',';
    out += std::to_string(row.config.s);
    out += ',';
    out += format_double(row.config.alpha);
    out += ',';
    out += format_double(row.config.c_const);
    out += ',';
    out += std::to_string(row.m);
    out += ',';
    out += std::to_string(row.estimate.trials);
    out += ',';
    out += std::to_string(row.estimate.failures);
    out += ',';
    out += format_double(row.estimate.p_e_hat);
    out += ',';
    out += format_double(row.estimate.ci_low);
    out += ',';
    out += format_double(row.estimate.ci_high);
    out += ',';
    out += format_double(row.estimate.ambiguity_rate);
    out += ',';
    out += std::to_string(row.cell_seed);
    out += '\n';
  }
  return out;
}

// Companion plot script: P_e against n per regime, log-log.
inline std::string gnuplot_script(const std::string& csv_path) {
  std::string s;
  s += "set datafile separator ','\n";
  s += "set logscale xy\n";
  s += "set xlabel 'n'\n";
  s += "set ylabel 'estimated P_e'\n";
  s += "set key top right\n";
  s += "plot \\\n";
  const char* regimes[] = {"full_knowledge", "structure_only", "independent"};
  for (int i = 0; i < 3; ++i) {
    s += "  '";
    s += csv_path;
    s += "' every ::1 using (strcol(1) eq '";
    s += regimes[i];
    s += "' ? $2 : NaN):9 with linespoints title '";
    s += regimes[i];
    s += "'";
    s += i < 2 ? ", \\\n" : "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Key-value config files: 'key = value' lines, '#' comments. Unknown keys are
// an error so typos cannot silently fall back to defaults.

class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path) {
    ConfigMap map;
    map.path_ = path;
    const auto lines = detail::split_lines(read_text_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const int line_no = static_cast<int>(i) + 1;
      std::string line = lines[i];
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (!detail::tokenize(line).empty())
          throw ParseError(path, line_no, "expected 'key = value'");
        continue;
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError(path, line_no, "missing key");
      if (value.empty())
        throw ParseError(path, line_no, "missing value for key '" + key + "'");
      if (map.entries_.count(key))
        throw ParseError(path, line_no, "duplicate key '" + key + "'");
      map.entries_[key] = Entry{value, line_no, false};
    }
    return map;
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return it->second.value;
  }

  std::string require_string(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end())
      throw ParseError(path_, 0, "missing required key '" + key + "'");
    it->second.used = true;
    return it->second.value;
  }

  long long get_int(const std::string& key, long long fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return detail::parse_int_token(it->second.value, path_, it->second.line);
  }

  long long require_int(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end())
      throw ParseError(path_, 0, "missing required key '" + key + "'");
    it->second.used = true;
    return detail::parse_int_token(it->second.value, path_, it->second.line);
  }

  double get_double(const std::string& key, double fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return detail::parse_double_token(it->second.value, path_, it->second.line);
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    const std::string& v = it->second.value;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError(path_, it->second.line,
                     "expected true/false for key '" + key + "'");
  }

  std::vector<std::string> get_list(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return {};
    it->second.used = true;
    std::string value = it->second.value;
    for (char& ch : value)
      if (ch == ',') ch = ' ';
    return detail::tokenize(value);
  }

  std::vector<long long> get_int_list(const std::string& key) {
    auto it = entries_.find(key);
    const int line = it == entries_.end() ? 0 : it->second.line;
    std::vector<long long> out;
    for (const auto& tok : get_list(key))
      out.push_back(detail::parse_int_token(tok, path_, line));
    return out;
  }

  std::vector<double> get_double_list(const std::string& key) {
    auto it = entries_.find(key);
    const int line = it == entries_.end() ? 0 : it->second.line;
    std::vector<double> out;
    for (const auto& tok : get_list(key))
      out.push_back(detail::parse_double_token(tok, path_, line));
    return out;
  }

  // Call after reading every expected key; leftover keys are an error.
  void reject_unknown_keys() const {
    for (const auto& [key, entry] : entries_) {
      if (!entry.used)
        throw ParseError(path_, entry.line, "unknown key '" + key + "'");
    }
  }

  const std::string& path() const { return path_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
  };

  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  }

  std::string path_;
  std::map<std::string, Entry> entries_;
};

struct GenerateSpec {
  GeneratorConfig config;
  long long m = 0;
};

// Keys mirror GeneratorConfig fields; either s or group_sizes picks the
// partition. m is the trace length to synthesize.
inline GenerateSpec parse_generate_spec(const std::string& path) {
  ConfigMap map = ConfigMap::parse_file(path);
  GenerateSpec spec;
  spec.config.n = static_cast<int>(map.require_int("n"));
  if (map.has("group_sizes")) {
    if (map.has("s"))
      throw ParseError(path, 0, "give either 's' or 'group_sizes', not both");
    for (long long v : map.get_int_list("group_sizes"))
      spec.config.group_sizes.push_back(static_cast<int>(v));
  } else {
    spec.config.group_sizes = uniform_group_sizes(
        spec.config.n, static_cast<int>(map.require_int("s")));
  }
  spec.m = map.require_int("m");
  if (spec.m < 1) throw ParseError(path, 0, "m must be >= 1");
  spec.config.rho_lo = map.get_double("rho_lo", spec.config.rho_lo);
  spec.config.rho_hi = map.get_double("rho_hi", spec.config.rho_hi);
  spec.config.mean_lo = map.get_double("mean_lo", spec.config.mean_lo);
  spec.config.mean_hi = map.get_double("mean_hi", spec.config.mean_hi);
  spec.config.sigma2 = map.get_double("sigma2", spec.config.sigma2);
  spec.config.topology = topology_from_string(
      map.get_string("topology", to_string(spec.config.topology)));
  spec.config.psd_min_eigenvalue =
      map.get_double("psd_min_eigenvalue", spec.config.psd_min_eigenvalue);
  spec.config.max_psd_retries = static_cast<int>(
      map.get_int("max_psd_retries", spec.config.max_psd_retries));
  spec.config.extra_edge_prob =
      map.get_double("extra_edge_prob", spec.config.extra_edge_prob);
  spec.config.allow_negative_rho =
      map.get_bool("allow_negative_rho", spec.config.allow_negative_rho);
  map.reject_unknown_keys();
  spec.config.validate();
  return spec;
}

// Sweep spec keys mirror SweepSpec/TrialConfig fields; grid keys take
// comma-separated lists.
inline SweepSpec parse_sweep_spec(const std::string& path) {
  ConfigMap map = ConfigMap::parse_file(path);
  SweepSpec spec;
  spec.regimes.clear();
  const auto regime_names = map.get_list("regimes");
  if (regime_names.empty())
    throw ParseError(path, 0, "missing required key 'regimes'");
  for (const auto& name : regime_names)
    spec.regimes.push_back(regime_from_string(name));
  for (long long v : map.get_int_list("n_values"))
    spec.n_values.push_back(static_cast<int>(v));
  for (long long v : map.get_int_list("s_values"))
    spec.s_values.push_back(static_cast<int>(v));
  spec.alpha_values = map.get_double_list("alpha_values");
  if (map.has("c_values")) spec.c_values = map.get_double_list("c_values");
  spec.trials = map.get_int("trials", spec.trials);
  spec.base_seed = static_cast<std::uint64_t>(
      map.get_int("seed", static_cast<long long>(spec.base_seed)));
  spec.base.m_override = map.get_int("m_override", spec.base.m_override);
  spec.base.rho_lo = map.get_double("rho_lo", spec.base.rho_lo);
  spec.base.rho_hi = map.get_double("rho_hi", spec.base.rho_hi);
  spec.base.mean_lo = map.get_double("mean_lo", spec.base.mean_lo);
  spec.base.mean_hi = map.get_double("mean_hi", spec.base.mean_hi);
  spec.base.sigma2 = map.get_double("sigma2", spec.base.sigma2);
  spec.base.topology = topology_from_string(
      map.get_string("topology", to_string(spec.base.topology)));
  spec.base.psd_min_eigenvalue =
      map.get_double("psd_min_eigenvalue", spec.base.psd_min_eigenvalue);
  spec.base.max_psd_retries = static_cast<int>(
      map.get_int("max_psd_retries", spec.base.max_psd_retries));
  spec.base.extra_edge_prob =
      map.get_double("extra_edge_prob", spec.base.extra_edge_prob);
  spec.base.allow_negative_rho =
      map.get_bool("allow_negative_rho", spec.base.allow_negative_rho);
  spec.base.edge_threshold_exponent = map.get_double(
      "edge_threshold_exponent", spec.base.edge_threshold_exponent);
  spec.base.max_group_size_for_matching = static_cast<int>(map.get_int(
      "max_group_size_for_matching", spec.base.max_group_size_for_matching));
  spec.base.target_user =
      static_cast<int>(map.get_int("target_user", spec.base.target_user));
  map.reject_unknown_keys();
  spec.validate();
  return spec;
}

}  // namespace tracematch
