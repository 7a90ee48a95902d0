#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tracematch/model.hpp"
#include "tracematch/rng.hpp"

namespace tracematch {

// Uniform permutation via Fisher-Yates on a seeded generator.
inline Permutation sample_permutation(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_permutation needs n >= 1");
  std::vector<int> forward(n);
  for (int u = 0; u < n; ++u) forward[u] = u;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(forward[i], forward[j]);
  }
  return Permutation::from_forward(std::move(forward));
}

// Output row p.forward[u] is an exact copy of input row u.
inline AnonymizedTraceSet anonymize(const TraceSet& x, const Permutation& p) {
  if (p.size() != x.n)
    throw std::invalid_argument("permutation size does not match trace rows");
  AnonymizedTraceSet y(x.n, x.m);
  for (int u = 0; u < x.n; ++u) {
    auto src = x.row(u);
    auto dst = y.row(p.forward[u]);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return y;
}

// Inverse of anonymize: row u recovers y.row(p.forward[u]) bit-exactly.
inline TraceSet deanonymize(const AnonymizedTraceSet& y, const Permutation& p) {
  if (p.size() != y.n)
    throw std::invalid_argument("permutation size does not match trace rows");
  TraceSet x(y.n, y.m);
  for (int v = 0; v < y.n; ++v) {
    auto src = y.row(v);
    auto dst = x.row(p.inverse[v]);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return x;
}

}  // namespace tracematch
