#pragma once

// Single CART tree growth under nodesize / maxnodes / mtry constraints.
//
// Cells are processed from an open list: first-in-first-out by default, or
// highest split gain first. A cell becomes a leaf when it holds fewer than
// `nodesize` points, when all of its points share one feature vector or one
// response, or when no positive-gain split exists among the drawn features.
// Once maxnodes-1 splits have been made every open cell becomes a leaf.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rfdepth/errors.hpp"
#include "rfdepth/resample.hpp"
#include "rfdepth/rng.hpp"
#include "rfdepth/tabular.hpp"

namespace rfdepth {

enum class GrowthOrder { Fifo, BestFirst };

struct TreeConfig {
  Task task = Task::Regression;
  std::size_t mtry = 1;
  std::size_t nodesize = 1;
  std::optional<std::size_t> maxnodes;  // nullopt: unlimited
  GrowthOrder growth_order = GrowthOrder::Fifo;
  Resample resample = Resample::bootstrap();

  /// mtry = p with bootstrap resampling.
  static TreeConfig bagging(Task task, std::size_t p) {
    TreeConfig cfg;
    cfg.task = task;
    cfg.mtry = p;
    return cfg;
  }

  /// mtry = max(1, floor(p/3)) with bootstrap resampling.
  static TreeConfig random_forest(Task task, std::size_t p) {
    TreeConfig cfg;
    cfg.task = task;
    cfg.mtry = std::max<std::size_t>(1, p / 3);
    return cfg;
  }

  void validate(const Dataset& d) const {
    if (mtry < 1 || mtry > d.p())
      throw DomainError("mtry=" + std::to_string(mtry) + " outside 1..p=" + std::to_string(d.p()));
    if (nodesize < 1) throw DomainError("nodesize must be >= 1");
    if (maxnodes && *maxnodes < 1) throw DomainError("maxnodes must be >= 1");
    if (resample.mode == ResampleMode::Subsample &&
        (resample.subsample_size < 1 || resample.subsample_size > d.n()))
      throw DomainError("subsample size outside 1..n");
    if (task == Task::Classification && d.task() != Task::Classification)
      throw DomainError("classification tree needs a classification dataset");
  }
};

/// A split is only taken when its gain exceeds this fraction of the parent
/// impurity; smaller values are indistinguishable from rounding noise.
inline constexpr double kMinRelativeGain = 1e-12;

/// Candidates whose fast-path gain lies within this fraction of the parent
/// impurity of the best are rescored exactly before choosing.
inline constexpr double kRescoreWindow = 1e-9;

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Threshold between two consecutive distinct sorted values. Falls back to
/// the lower value when the midpoint rounds onto the upper one.
inline double midpoint_threshold(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

namespace detail {

inline double gini_weighted(double n, double sum_sq_counts) { return n - sum_sq_counts / n; }

inline bool all_identical(std::span<const double> y) {
  return std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
}

}  // namespace detail

/// Node impurity: sum of squared deviations from the mean (regression) or
/// cell size times the Gini index (classification). Exactly 0 for a
/// constant slice.
inline double impurity(std::span<const double> responses, Task task) {
  if (responses.empty()) throw DomainError("impurity of an empty slice");
  if (detail::all_identical(responses)) return 0.0;
  const double n = static_cast<double>(responses.size());
  if (task == Task::Regression) {
    double sum = 0.0;
    for (double v : responses) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : responses) ss += (v - mean) * (v - mean);
    return ss;
  }
  double top = 0.0;
  for (double v : responses) top = std::max(top, v);
  std::vector<double> counts(static_cast<std::size_t>(top) + 1, 0.0);
  for (double v : responses) counts[static_cast<std::size_t>(v)] += 1.0;
  double sq = 0.0;
  for (double c : counts) sq += c * c;
  return detail::gini_weighted(n, sq);
}

/// Scratch buffers reused across split searches of one tree.
struct SplitWorkspace {
  struct Candidate {
    std::size_t feature;
    double threshold;
    double fast_gain;
  };
  std::vector<std::pair<double, double>> sorted;
  std::vector<Candidate> candidates;
  std::vector<double> left, right, parent;
  std::vector<double> counts_left, counts_total;
};

namespace detail {

/// Gain of cutting `cell` at (feature, threshold), children taken in cell
/// order. This is the reported gain of every split.
inline double exact_gain(const Dataset& d, std::span<const std::size_t> cell, Task task,
                         double parent_impurity, std::size_t feature, double threshold,
                         SplitWorkspace& ws) {
  ws.left.clear();
  ws.right.clear();
  for (std::size_t i : cell) {
    (d.at(i, feature) <= threshold ? ws.left : ws.right).push_back(d.response()[i]);
  }
  return parent_impurity - impurity(ws.left, task) - impurity(ws.right, task);
}

}  // namespace detail

/// Best CART split of `cell` over `features`, or nullopt when no cut with
/// both children nonempty has positive gain. Ties go to the lowest feature
/// index, then the lowest threshold.
inline std::optional<Split> best_split(const Dataset& d, std::span<const std::size_t> cell,
                                       std::span<const std::size_t> features, Task task,
                                       SplitWorkspace& ws) {
  const std::size_t m = cell.size();
  if (m < 2 || features.empty()) return std::nullopt;

  ws.parent.clear();
  for (std::size_t i : cell) ws.parent.push_back(d.response()[i]);
  const double parent_impurity = impurity(ws.parent, task);
  if (parent_impurity <= 0.0) return std::nullopt;
  const double window = kRescoreWindow * parent_impurity;

  double mean = 0.0;
  std::size_t n_classes = 0;
  if (task == Task::Regression) {
    for (double v : ws.parent) mean += v;
    mean /= static_cast<double>(m);
  } else {
    n_classes = std::max<std::size_t>(d.n_classes(), 2);
    ws.counts_total.assign(n_classes, 0.0);
    for (double v : ws.parent) ws.counts_total[static_cast<std::size_t>(v)] += 1.0;
  }
  double total_sq = 0.0;
  for (double c : ws.counts_total) total_sq += c * c;

  ws.candidates.clear();
  double best_fast = -std::numeric_limits<double>::infinity();
  const double n_all = static_cast<double>(m);

  for (std::size_t f : features) {
    ws.sorted.clear();
    for (std::size_t i : cell) ws.sorted.emplace_back(d.at(i, f), d.response()[i]);
    std::sort(ws.sorted.begin(), ws.sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (ws.sorted.front().first == ws.sorted.back().first) continue;

    double sum_left = 0.0;
    double sq_left = 0.0, sq_right = total_sq;
    if (task == Task::Classification) {
      ws.counts_left.assign(n_classes, 0.0);
    }
    double sum_all = 0.0;
    if (task == Task::Regression)
      for (const auto& [x, y] : ws.sorted) sum_all += y - mean;

    for (std::size_t k = 0; k + 1 < m; ++k) {
      const double y = ws.sorted[k].second;
      if (task == Task::Regression) {
        sum_left += y - mean;
      } else {
        const auto c = static_cast<std::size_t>(y);
        const double cl = ws.counts_left[c];
        const double cr = ws.counts_total[c] - cl;
        sq_left += 2.0 * cl + 1.0;
        sq_right -= 2.0 * cr - 1.0;
        ws.counts_left[c] = cl + 1.0;
      }
      const double lo = ws.sorted[k].first;
      const double hi = ws.sorted[k + 1].first;
      if (!(lo < hi)) continue;
      const double nl = static_cast<double>(k + 1);
      const double nr = n_all - nl;
      double gain;
      if (task == Task::Regression) {
        const double sum_right = sum_all - sum_left;
        gain = sum_left * sum_left / nl + sum_right * sum_right / nr - sum_all * sum_all / n_all;
      } else {
        gain = parent_impurity - detail::gini_weighted(nl, sq_left) -
               detail::gini_weighted(nr, sq_right);
      }
      if (gain >= best_fast - window) {
        ws.candidates.push_back({f, midpoint_threshold(lo, hi), gain});
        best_fast = std::max(best_fast, gain);
      }
    }
  }
  if (ws.candidates.empty()) return std::nullopt;

  std::optional<Split> best;
  for (const auto& c : ws.candidates) {
    if (c.fast_gain < best_fast - window) continue;
    const double g = detail::exact_gain(d, cell, task, parent_impurity, c.feature, c.threshold, ws);
    const bool better =
        !best || g > best->gain ||
        (g == best->gain && (c.feature < best->feature ||
                             (c.feature == best->feature && c.threshold < best->threshold)));
    if (better) best = Split{c.feature, c.threshold, g};
  }
  if (!best || !(best->gain > kMinRelativeGain * parent_impurity)) return std::nullopt;
  return best;
}

inline std::optional<Split> best_split(const Dataset& d, std::span<const std::size_t> cell,
                                       std::span<const std::size_t> features, Task task) {
  SplitWorkspace ws;
  return best_split(d, cell, features, task, ws);
}

/// Immutable fitted tree. Node 0 is the root; internal nodes route
/// x[feature] <= threshold to `left`.
class FittedTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    double value = 0.0;  // leaf mean, or majority class
    double gain = 0.0;   // impurity decrease of the split (internal nodes)
    std::uint32_t n_samples = 0;
    std::uint32_t counts_offset = 0;

    bool is_leaf() const noexcept { return feature < 0; }
    bool operator==(const Node&) const = default;
  };

  FittedTree(std::vector<Node> nodes, std::vector<std::uint32_t> class_counts, Task task,
             std::size_t p, std::size_t n_classes)
      : nodes_(std::move(nodes)),
        counts_(std::move(class_counts)),
        task_(task),
        p_(p),
        n_classes_(n_classes) {
    n_leaves_ = static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t root() const noexcept { return 0; }
  std::size_t n_leaves() const noexcept { return n_leaves_; }
  std::size_t n_splits() const noexcept { return nodes_.size() - n_leaves_; }
  Task task() const noexcept { return task_; }
  std::size_t p() const noexcept { return p_; }
  std::size_t n_classes() const noexcept { return n_classes_; }

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t k = 0;
    while (!nodes_[k].is_leaf()) {
      const Node& nd = nodes_[k];
      k = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return k;
  }

  std::span<const std::uint32_t> leaf_counts(std::size_t leaf) const {
    if (task_ != Task::Classification) return {};
    return {counts_.data() + nodes_[leaf].counts_offset, n_classes_};
  }

  /// Leaf mean (regression) or majority class index (classification).
  double predict(std::span<const double> x) const {
    if (x.size() != p_)
      throw DomainError("query has " + std::to_string(x.size()) + " features, tree expects " +
                        std::to_string(p_));
    return nodes_[leaf_index(x)].value;
  }

  bool operator==(const FittedTree& o) const {
    return nodes_ == o.nodes_ && counts_ == o.counts_ && task_ == o.task_ && p_ == o.p_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> counts_;
  Task task_;
  std::size_t p_;
  std::size_t n_classes_;
  std::size_t n_leaves_ = 0;
};

inline double predict_tree(const FittedTree& t, std::span<const double> x) { return t.predict(x); }

namespace detail {

class TreeGrower {
 public:
  TreeGrower(const Dataset& d, const TreeConfig& cfg, Rng& rng)
      : d_(d),
        cfg_(cfg),
        rng_(rng),
        n_classes_(cfg.task == Task::Classification ? d.n_classes() : 0),
        all_features_(d.p()) {
    for (std::size_t j = 0; j < d.p(); ++j) all_features_[j] = j;
    budget_ = cfg.maxnodes ? *cfg.maxnodes - 1 : std::numeric_limits<std::size_t>::max();
  }

  FittedTree grow(std::vector<std::size_t> root_cell) {
    nodes_.emplace_back();
    if (cfg_.growth_order == GrowthOrder::Fifo)
      grow_fifo(std::move(root_cell));
    else
      grow_best_first(std::move(root_cell));
    return FittedTree(std::move(nodes_), std::move(counts_), cfg_.task, d_.p(),
                      cfg_.task == Task::Classification ? n_classes_ : 0);
  }

 private:
  struct OpenCell {
    std::uint32_t node;
    std::vector<std::size_t> idx;
    Split split;
    std::uint64_t order;
  };

  bool must_finalize(std::span<const std::size_t> cell) const {
    if (cell.size() < cfg_.nodesize || cell.size() < 2) return true;
    const auto y = d_.response();
    const double y0 = y[cell.front()];
    bool constant_y = true;
    for (std::size_t i : cell)
      if (y[i] != y0) {
        constant_y = false;
        break;
      }
    if (constant_y) return true;
    const auto x0 = d_.row(cell.front());
    for (std::size_t i : cell) {
      const auto xi = d_.row(i);
      if (!std::equal(x0.begin(), x0.end(), xi.begin())) return false;
    }
    return true;
  }

  /// Draws mtry features, redrawing up to ceil(p/mtry) times when the draw
  /// admits no valid split.
  std::optional<Split> find_split(std::span<const std::size_t> cell) {
    const std::size_t p = d_.p();
    if (cfg_.mtry >= p) return best_split(d_, cell, all_features_, cfg_.task, ws_);
    const std::size_t redraws = (p + cfg_.mtry - 1) / cfg_.mtry;
    for (std::size_t attempt = 0; attempt <= redraws; ++attempt) {
      auto feats = rng_.sample_without_replacement<std::size_t>(all_features_, cfg_.mtry);
      std::sort(feats.begin(), feats.end());
      if (auto s = best_split(d_, cell, feats, cfg_.task, ws_)) return s;
    }
    return std::nullopt;
  }

  void make_leaf(std::uint32_t node, std::span<const std::size_t> cell) {
    auto& nd = nodes_[node];
    nd.feature = -1;
    nd.n_samples = static_cast<std::uint32_t>(cell.size());
    const auto y = d_.response();
    if (cfg_.task == Task::Regression) {
      double sum = 0.0;
      for (std::size_t i : cell) sum += y[i];
      nd.value = sum / static_cast<double>(cell.size());
      return;
    }
    nd.counts_offset = static_cast<std::uint32_t>(counts_.size());
    counts_.resize(counts_.size() + n_classes_, 0);
    for (std::size_t i : cell) ++counts_[nd.counts_offset + static_cast<std::size_t>(y[i])];
    std::size_t best = 0;
    for (std::size_t k = 1; k < n_classes_; ++k)
      if (counts_[nd.counts_offset + k] > counts_[nd.counts_offset + best]) best = k;
    nd.value = static_cast<double>(best);
  }

  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> cut(
      std::uint32_t node, std::span<const std::size_t> cell, const Split& s) {
    std::vector<std::size_t> left, right;
    for (std::size_t i : cell) (d_.at(i, s.feature) <= s.threshold ? left : right).push_back(i);
    const auto l = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    auto& nd = nodes_[node];
    nd.feature = static_cast<std::int32_t>(s.feature);
    nd.threshold = s.threshold;
    nd.gain = s.gain;
    nd.left = l;
    nd.right = l + 1;
    nd.n_samples = static_cast<std::uint32_t>(cell.size());
    ++splits_;
    return {std::move(left), std::move(right)};
  }

  void grow_fifo(std::vector<std::size_t> root_cell) {
    std::deque<std::pair<std::uint32_t, std::vector<std::size_t>>> open;
    open.emplace_back(0, std::move(root_cell));
    while (!open.empty()) {
      auto [node, cell] = std::move(open.front());
      open.pop_front();
      if (splits_ >= budget_) {
        make_leaf(node, cell);
        continue;
      }
      if (must_finalize(cell)) {
        make_leaf(node, cell);
        continue;
      }
      auto s = find_split(cell);
      if (!s) {
        make_leaf(node, cell);
        continue;
      }
      auto [left, right] = cut(node, cell, *s);
      const auto l = nodes_[node].left;
      open.emplace_back(l, std::move(left));
      open.emplace_back(l + 1, std::move(right));
    }
  }

  void grow_best_first(std::vector<std::size_t> root_cell) {
    auto cmp = [](const OpenCell& a, const OpenCell& b) {
      if (a.split.gain != b.split.gain) return a.split.gain < b.split.gain;
      return a.order > b.order;
    };
    std::priority_queue<OpenCell, std::vector<OpenCell>, decltype(cmp)> open(cmp);
    std::uint64_t order = 0;
    auto admit = [&](std::uint32_t node, std::vector<std::size_t> cell) {
      if (must_finalize(cell)) return make_leaf(node, cell);
      auto s = find_split(cell);
      if (!s) return make_leaf(node, cell);
      open.push(OpenCell{node, std::move(cell), *s, order++});
    };
    if (budget_ == 0) {
      make_leaf(0, root_cell);
      return;
    }
    admit(0, std::move(root_cell));
    while (!open.empty()) {
      OpenCell c = open.top();
      open.pop();
      if (splits_ >= budget_) {
        make_leaf(c.node, c.idx);
        continue;
      }
      auto [left, right] = cut(c.node, c.idx, c.split);
      const auto l = nodes_[c.node].left;
      admit(l, std::move(left));
      admit(l + 1, std::move(right));
    }
  }

  const Dataset& d_;
  const TreeConfig& cfg_;
  Rng& rng_;
  std::size_t n_classes_;
  std::vector<std::size_t> all_features_;
  std::size_t budget_ = 0;
  std::size_t splits_ = 0;
  std::vector<FittedTree::Node> nodes_;
  std::vector<std::uint32_t> counts_;
  SplitWorkspace ws_;
};

}  // namespace detail

/// Grows one tree on the rows listed in `indices` (a resample of d).
inline FittedTree grow_tree_on(const Dataset& d, const TreeConfig& cfg,
                               std::span<const std::size_t> indices, Rng& rng) {
  cfg.validate(d);
  if (indices.empty()) throw DomainError("cannot grow a tree on an empty resample");
  detail::TreeGrower grower(d, cfg, rng);
  return grower.grow({indices.begin(), indices.end()});
}

/// Draws the configured resample from `rng`, then grows on it.
inline FittedTree grow_tree(const Dataset& d, const TreeConfig& cfg, Rng& rng) {
  cfg.validate(d);
  const auto draw = resample(d.n(), cfg.resample, rng);
  return grow_tree_on(d, cfg, draw.indices, rng);
}

}  // namespace rfdepth
