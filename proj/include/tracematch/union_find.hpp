#pragma once

#include <numeric>
#include <vector>

namespace tracematch {

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];  // path halving
      x = parent_[x];
    }
    return x;
  }

  // Returns false if x and y were already in the same set.
  bool unite(int x, int y) {
    int rx = find(x), ry = find(y);
    if (rx == ry) return false;
    if (rank_[rx] < rank_[ry]) std::swap(rx, ry);
    parent_[ry] = rx;
    if (rank_[rx] == rank_[ry]) ++rank_[rx];
    return true;
  }

  bool connected(int x, int y) { return find(x) == find(y); }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
};

}  // namespace tracematch
