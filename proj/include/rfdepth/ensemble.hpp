#pragma once

// Forests of B trees: resampling, schedule-independent parallel fitting,
// mean / majority-vote aggregation, losses, the interpolation check and a
// complete U-statistic reference for tiny problems.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfdepth/cart.hpp"
#include "rfdepth/errors.hpp"
#include "rfdepth/parallel.hpp"
#include "rfdepth/resample.hpp"
#include "rfdepth/rng.hpp"
#include "rfdepth/tabular.hpp"

namespace rfdepth {

/// Regression interpolation tolerance (absolute).
inline constexpr double kInterpolationTolerance = 1e-12;

class Forest {
 public:
  Forest(std::vector<FittedTree> trees, TreeConfig cfg, std::uint64_t master_seed, std::size_t p,
         std::size_t n_classes)
      : trees_(std::move(trees)), cfg_(cfg), seed_(master_seed), p_(p), n_classes_(n_classes) {
    if (trees_.empty()) throw DomainError("a forest needs at least one tree");
  }

  const std::vector<FittedTree>& trees() const noexcept { return trees_; }
  const TreeConfig& config() const noexcept { return cfg_; }
  std::size_t n_trees() const noexcept { return trees_.size(); }
  std::uint64_t master_seed() const noexcept { return seed_; }
  std::size_t p() const noexcept { return p_; }

  /// Aggregate of the first `count` trees. Because tree b depends only on
  /// (master_seed, b), this equals the prediction of a forest fitted with
  /// B = count.
  double predict_first(std::span<const double> x, std::size_t count) const {
    if (x.size() != p_)
      throw DomainError("query has " + std::to_string(x.size()) + " features, forest expects " +
                        std::to_string(p_));
    if (count == 0 || count > trees_.size()) throw DomainError("tree count out of range");
    if (cfg_.task == Task::Regression) {
      double sum = 0.0;
      for (std::size_t b = 0; b < count; ++b) sum += trees_[b].predict(x);
      return sum / static_cast<double>(count);
    }
    std::vector<std::size_t> votes(n_classes_, 0);
    for (std::size_t b = 0; b < count; ++b) ++votes[static_cast<std::size_t>(trees_[b].predict(x))];
    return static_cast<double>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }

  double predict(std::span<const double> x) const { return predict_first(x, trees_.size()); }

 private:
  std::vector<FittedTree> trees_;
  TreeConfig cfg_;
  std::uint64_t seed_;
  std::size_t p_;
  std::size_t n_classes_;
};

/// Fits B trees; tree b draws its resample and feature subsets from the
/// stream derive_seed(master_seed, b), so any `threads` value gives the
/// same forest.
inline Forest fit_forest(const Dataset& d, const TreeConfig& cfg, std::size_t n_trees,
                         std::uint64_t master_seed, unsigned threads = 1) {
  cfg.validate(d);
  if (n_trees < 1) throw DomainError("n_trees must be >= 1");
  std::vector<std::optional<FittedTree>> slots(n_trees);
  parallel_for(n_trees, threads, [&](std::size_t b) {
    Rng rng(derive_seed(master_seed, b));
    slots[b].emplace(grow_tree(d, cfg, rng));
  });
  std::vector<FittedTree> trees;
  trees.reserve(n_trees);
  for (auto& s : slots) trees.push_back(std::move(*s));
  return Forest(std::move(trees), cfg, master_seed, d.p(), d.n_classes());
}

/// Fits one tree per explicit resample draw (the resample mode in cfg is
/// ignored). Used to build complete and incomplete U-statistics.
inline Forest fit_forest_on_draws(const Dataset& d, const TreeConfig& cfg,
                                  std::span<const std::vector<std::size_t>> draws,
                                  std::uint64_t master_seed, unsigned threads = 1) {
  cfg.validate(d);
  if (draws.empty()) throw DomainError("need at least one draw");
  std::vector<std::optional<FittedTree>> slots(draws.size());
  parallel_for(draws.size(), threads, [&](std::size_t b) {
    Rng rng(derive_seed(master_seed, b));
    slots[b].emplace(grow_tree_on(d, cfg, draws[b], rng));
  });
  std::vector<FittedTree> trees;
  for (auto& s : slots) trees.push_back(std::move(*s));
  return Forest(std::move(trees), cfg, master_seed, d.p(), d.n_classes());
}

inline double predict_forest(const Forest& f, std::span<const double> x) { return f.predict(x); }

template <typename Model>
std::vector<double> predict_rows(const Model& model, const Dataset& d) {
  std::vector<double> out(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) out[i] = model.predict(d.row(i));
  return out;
}

/// Mean squared error (regression) or misclassification rate (classification).
inline double evaluate(std::span<const double> predictions, std::span<const double> truth,
                       Task task) {
  if (predictions.size() != truth.size())
    throw DomainError("prediction/truth length mismatch: " + std::to_string(predictions.size()) +
                      " vs " + std::to_string(truth.size()));
  if (truth.empty()) throw DomainError("evaluate on an empty set");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (task == Task::Regression) {
      const double e = predictions[i] - truth[i];
      acc += e * e;
    } else {
      acc += predictions[i] != truth[i] ? 1.0 : 0.0;
    }
  }
  return acc / static_cast<double>(truth.size());
}

/// True when the model reproduces every training response: exactly for
/// classification, within kInterpolationTolerance for regression.
template <typename Predictor>
bool is_interpolating(const Predictor& predict, const Dataset& d, Task task) {
  for (std::size_t i = 0; i < d.n(); ++i) {
    const double yhat = predict(d.row(i));
    const double y = d.response()[i];
    if (task == Task::Classification ? yhat != y : std::abs(yhat - y) > kInterpolationTolerance)
      return false;
  }
  return true;
}

/// Largest number of subsamples complete_u_statistic will enumerate.
inline constexpr std::uint64_t kMaxEnumeratedSubsamples = 100000;

/// C(n, k), saturating at limit + 1.
inline std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k, std::uint64_t limit) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;  // exact: r*(n-k+i) is divisible by i at every step
    if (r > limit) return limit + 1;
  }
  return r;
}

/// All size-k subsets of 0..n-1 in lexicographic order.
inline std::vector<std::vector<std::size_t>> enumerate_subsamples(std::size_t n, std::size_t k) {
  if (k < 1 || k > n) throw DomainError("subsample size outside 1..n");
  if (binomial_capped(n, k, kMaxEnumeratedSubsamples) > kMaxEnumeratedSubsamples)
    throw CapacityError("C(" + std::to_string(n) + "," + std::to_string(k) +
                        ") exceeds the enumeration guard");
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(k);
  std::iota(cur.begin(), cur.end(), std::size_t{0});
  for (;;) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

/// Average of the deterministic tree kernel at x over all C(n, k)
/// subsamples drawn without replacement.
inline double complete_u_statistic(const Dataset& d, std::size_t k, const TreeConfig& kernel,
                                   std::span<const double> x) {
  if (kernel.mtry != d.p()) throw DomainError("U-statistic kernel must use mtry = p");
  if (kernel.task != Task::Regression) throw DomainError("U-statistic kernel must be a regression tree");
  const auto subsets = enumerate_subsamples(d.n(), k);
  Rng unused(0);
  double sum = 0.0;
  for (const auto& s : subsets) sum += grow_tree_on(d, kernel, s, unused).predict(x);
  return sum / static_cast<double>(subsets.size());
}

}  // namespace rfdepth
