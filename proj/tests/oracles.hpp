#pragma once

// Reference computations used only by tests. Each one takes the direct,
// slow route (exhaustive enumeration, normal equations, explicit double
// sums) and shares no code path with the library routine it checks.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "rfdepth/tabular.hpp"

namespace oracle {

/// Sum of squared deviations (regression) or n * Gini (classification),
/// both evaluated in the order given.
inline double node_impurity(const std::vector<double>& y, rfdepth::Task task) {
  bool constant = true;
  for (double v : y) constant = constant && v == y.front();
  if (constant) return 0.0;
  const double n = static_cast<double>(y.size());
  if (task == rfdepth::Task::Regression) {
    double sum = 0.0;
    for (double v : y) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    return ss;
  }
  std::map<double, double> counts;
  for (double v : y) counts[v] += 1.0;
  double sq = 0.0;
  for (const auto& [label, c] : counts) sq += c * c;
  return n - sq / n;
}

struct BruteSplit {
  std::size_t feature;
  double threshold;
  double gain;
};

/// Every feature x every midpoint between consecutive distinct values.
inline std::optional<BruteSplit> brute_force_split(const rfdepth::Dataset& d,
                                                   const std::vector<std::size_t>& cell,
                                                   rfdepth::Task task) {
  std::vector<double> parent;
  for (std::size_t i : cell) parent.push_back(d.response()[i]);
  const double parent_imp = node_impurity(parent, task);
  std::optional<BruteSplit> best;
  for (std::size_t f = 0; f < d.p(); ++f) {
    std::set<double> values;
    for (std::size_t i : cell) values.insert(d.at(i, f));
    for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
      const double lo = *it, hi = *std::next(it);
      double thr = lo + (hi - lo) / 2.0;
      if (!(thr < hi)) thr = lo;
      std::vector<double> left, right;
      for (std::size_t i : cell) (d.at(i, f) <= thr ? left : right).push_back(d.response()[i]);
      const double g = parent_imp - node_impurity(left, task) - node_impurity(right, task);
      if (!best || g > best->gain) best = BruteSplit{f, thr, g};
    }
  }
  if (!best || !(best->gain > 1e-12 * parent_imp)) return std::nullopt;
  return best;
}

/// (intercept, slopes) from the normal equations (X'X) b = X'y.
inline std::vector<double> normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * y;
  const Eigen::VectorXd b = gram.llt().solve(rhs);
  return {b.data(), b.data() + b.size()};
}

/// sum_{i,j < s} rho^|i-j|.
inline double ar1_block_sum(std::size_t s, double rho) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      double term = 1.0;
      const std::size_t k = i > j ? i - j : j - i;
      for (std::size_t t = 0; t < k; ++t) term *= rho;
      acc += term;
    }
  return acc;
}

/// All size-k subsets by recursion.
inline void subsets(std::size_t n, std::size_t k, std::size_t start, std::vector<std::size_t>& cur,
                    std::vector<std::vector<std::size_t>>& out) {
  if (cur.size() == k) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = start; i < n; ++i) {
    cur.push_back(i);
    subsets(n, k, i + 1, cur, out);
    cur.pop_back();
  }
}

inline std::vector<std::vector<std::size_t>> all_subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  subsets(n, k, 0, cur, out);
  return out;
}

/// Points reaching each node of a tree, in ascending row order.
template <typename Tree>
std::vector<std::vector<std::size_t>> node_cells(const Tree& t, const rfdepth::Dataset& d,
                                                 std::span<const std::size_t> rows) {
  std::vector<std::vector<std::size_t>> cells(t.nodes().size());
  for (std::size_t i : rows) {
    std::size_t k = 0;
    cells[k].push_back(i);
    while (!t.nodes()[k].is_leaf()) {
      const auto& nd = t.nodes()[k];
      k = d.at(i, static_cast<std::size_t>(nd.feature)) <= nd.threshold ? nd.left : nd.right;
      cells[k].push_back(i);
    }
  }
  return cells;
}

}  // namespace oracle
