// Independent reference implementations used as test oracles.
#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace oracle {

// Two-pass collapse: drop repeats, then blanks.
inline std::vector<std::size_t> collapse(const std::vector<std::size_t>& path, std::size_t blank) {
  std::vector<std::size_t> merged;
  for (std::size_t i = 0; i < path.size(); ++i)
    if (i == 0 || path[i] != path[i - 1]) merged.push_back(path[i]);
  std::vector<std::size_t> out;
  for (auto s : merged)
    if (s != blank) out.push_back(s);
  return out;
}

// Probability of every reachable label, by enumerating all (K)^M paths.
inline std::map<std::vector<std::size_t>, double> path_sums(const Eigen::MatrixXd& probs) {
  const auto m = static_cast<std::size_t>(probs.rows());
  const auto k = static_cast<std::size_t>(probs.cols());
  const std::size_t blank = k - 1;
  std::map<std::vector<std::size_t>, double> sums;
  std::vector<std::size_t> path(m, 0);
  while (true) {
    double p = 1.0;
    for (std::size_t t = 0; t < m; ++t) p *= probs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(path[t]));
    sums[collapse(path, blank)] += p;
    std::size_t t = 0;
    while (t < m && ++path[t] == k) path[t++] = 0;
    if (t == m) break;
  }
  return sums;
}

inline Eigen::MatrixXd random_rows(std::mt19937_64& rng, std::size_t frames, std::size_t classes) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd p(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(classes));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = u(rng);
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

// True iff the two labelings induce the same partition.
template <typename A, typename B>
bool same_partition(const std::vector<A>& a, const std::vector<B>& b) {
  if (a.size() != b.size()) return false;
  std::map<A, B> fwd;
  std::map<B, A> back;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (fwd.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (back.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

}  // namespace oracle
