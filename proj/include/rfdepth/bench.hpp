#pragma once

// Experiment orchestration: maxnodes sweeps, optimal-nodesize tuning and the
// single-tree -> forest complexity sweep, each aggregated over repetitions.
//
// Every repetition draws its data from derive_seed(seed_data, rep) and every
// fit from a seed keyed by (rep, grid point), so results do not depend on
// the thread count or on which worker ran which task.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rfdepth/cart.hpp"
#include "rfdepth/ensemble.hpp"
#include "rfdepth/errors.hpp"
#include "rfdepth/parallel.hpp"
#include "rfdepth/randfs.hpp"
#include "rfdepth/rng.hpp"
#include "rfdepth/synthgen.hpp"
#include "rfdepth/tabular.hpp"

namespace rfdepth {

/// Data for one repetition.
struct ProblemSplits {
  Dataset train;
  Dataset test;
  std::optional<Dataset> validation;
};

/// Produces the data of one repetition from its seed.
using ProblemSource = std::function<ProblemSplits(std::uint64_t rep_seed)>;

/// Fresh synthetic problem per repetition; `spec.seed` is replaced.
inline ProblemSource synthetic_source(SyntheticSpec spec) {
  spec.validate();
  return [spec](std::uint64_t rep_seed) {
    SyntheticSpec s = spec;
    s.seed = rep_seed;
    auto g = generate(s);
    return ProblemSplits{std::move(g.train), std::move(g.test), std::move(g.validation)};
  };
}

inline ProblemSource label_noise_source(LabelNoiseSpec spec) {
  return [spec](std::uint64_t rep_seed) {
    LabelNoiseSpec s = spec;
    s.seed = rep_seed;
    auto g = generate_label_noise(s);
    return ProblemSplits{std::move(g.train), std::move(g.test), std::move(g.validation)};
  };
}

/// Resamples train / validation / test from two fixed pools per repetition.
inline ProblemSource pooled_source(Dataset train_pool, Dataset test_pool, SplitPlan plan) {
  return [train_pool = std::move(train_pool), test_pool = std::move(test_pool),
          plan](std::uint64_t rep_seed) {
    SplitPlan p = plan;
    p.seed = rep_seed;
    auto [tr, va, te] = subsample_splits(train_pool, test_pool, p);
    return ProblemSplits{std::move(tr), std::move(te), std::move(va)};
  };
}

/// {2,4,6,8,10} then step 5 from 15 up to n/2, then step 25 from n/2+25
/// up to n, always ending at n.
inline std::vector<std::size_t> default_maxnodes_grid(std::size_t n) {
  std::set<std::size_t> g;
  for (std::size_t v : {2, 4, 6, 8, 10})
    if (v <= n) g.insert(v);
  const std::size_t half = n / 2;
  for (std::size_t v = 15; v <= half; v += 5) g.insert(v);
  if (half >= 10) g.insert(half);
  for (std::size_t v = half + 25; v <= n; v += 25) g.insert(v);
  if (n >= 2) g.insert(n);
  return {g.begin(), g.end()};
}

/// {1, 3} plus `extra` values equally spaced between 5 and n/2 (rounded).
inline std::vector<std::size_t> default_nodesize_grid(std::size_t n, std::size_t extra = 10) {
  std::set<std::size_t> g{1, 3};
  const double lo = 5.0;
  const double hi = std::max(lo, static_cast<double>(n) / 2.0);
  if (extra == 1) g.insert(5);
  for (std::size_t k = 0; extra > 1 && k < extra; ++k)
    g.insert(static_cast<std::size_t>(
        std::llround(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(extra - 1))));
  return {g.begin(), g.end()};
}

/// Forest grid sweep (maxnodes x nodesize x mtry x n_trees). Empty grid
/// axes fall back to the template configuration.
struct SweepSpec {
  std::string experiment = "sweep";
  std::string setting;
  std::optional<double> snr;
  ProblemSource problem;
  TreeConfig tree;
  std::vector<std::size_t> maxnodes;
  std::vector<std::size_t> nodesize;
  std::vector<std::size_t> mtry;
  std::vector<std::size_t> n_trees;
  std::size_t reps = 1;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
};

struct SweepOutcome {
  std::vector<SweepResult> rows;
  std::size_t failures = 0;  // grid-point fits excluded from the means
};

struct LossStats {
  std::size_t count = 0;
  double mean_train = 0.0;
  double mean_test = 0.0;
  double se_test = 0.0;
};

/// Means in input order; SE = sample standard deviation / sqrt(count).
inline LossStats aggregate_losses(std::span<const double> train, std::span<const double> test) {
  LossStats s;
  s.count = test.size();
  if (s.count == 0) return s;
  const double c = static_cast<double>(s.count);
  for (double v : train) s.mean_train += v;
  for (double v : test) s.mean_test += v;
  s.mean_train /= c;
  s.mean_test /= c;
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : test) ss += (v - s.mean_test) * (v - s.mean_test);
    s.se_test = std::sqrt(ss / (c - 1.0)) / std::sqrt(c);
  }
  return s;
}

namespace detail {

struct GridPoint {
  std::size_t mtry;
  std::optional<std::size_t> maxnodes;
  std::size_t nodesize;
  std::size_t n_trees;
};

inline std::vector<GridPoint> expand_grid(const SweepSpec& spec) {
  auto axis = [](const std::vector<std::size_t>& v, std::size_t fallback) {
    return v.empty() ? std::vector<std::size_t>{fallback} : v;
  };
  const auto mtrys = axis(spec.mtry, spec.tree.mtry);
  const auto sizes = axis(spec.nodesize, spec.tree.nodesize);
  const auto trees = axis(spec.n_trees, 500);
  std::vector<std::optional<std::size_t>> depths;
  if (spec.maxnodes.empty())
    depths.push_back(spec.tree.maxnodes);
  else
    depths.assign(spec.maxnodes.begin(), spec.maxnodes.end());
  std::vector<GridPoint> grid;
  for (auto m : mtrys)
    for (auto d : depths)
      for (auto s : sizes)
        for (auto b : trees) grid.push_back({m, d, s, b});
  return grid;
}

struct FitLoss {
  bool ok = false;
  double train = 0.0;
  double test = 0.0;
};

inline double model_loss(const Forest& f, const Dataset& d, Task task) {
  const auto pred = predict_rows(f, d);
  return evaluate(pred, d.response(), task);
}

inline std::vector<ProblemSplits> draw_problems(const ProblemSource& source, std::size_t reps,
                                                std::uint64_t master_seed, unsigned threads) {
  std::vector<std::optional<ProblemSplits>> slots(reps);
  const std::uint64_t data_seed = derive_seed(master_seed, 0);
  parallel_for(reps, threads, [&](std::size_t r) { slots[r].emplace(source(derive_seed(data_seed, r))); });
  std::vector<ProblemSplits> out;
  out.reserve(reps);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace detail

/// Grid sweep over forests: one fresh problem per repetition, one forest per
/// (repetition, grid point).
inline SweepOutcome run_depth_sweep(const SweepSpec& spec) {
  if (spec.reps < 1) throw DomainError("reps must be >= 1");
  if (!spec.problem) throw DomainError("sweep has no problem source");
  const auto grid = detail::expand_grid(spec);
  const auto problems = detail::draw_problems(spec.problem, spec.reps, spec.master_seed, spec.threads);
  const std::uint64_t fit_seed = derive_seed(spec.master_seed, 1);

  std::vector<detail::FitLoss> results(spec.reps * grid.size());
  parallel_for(results.size(), spec.threads, [&](std::size_t t) {
    const std::size_t r = t / grid.size();
    const std::size_t g = t % grid.size();
    const auto& gp = grid[g];
    const auto& prob = problems[r];
    TreeConfig cfg = spec.tree;
    cfg.mtry = gp.mtry;
    cfg.maxnodes = gp.maxnodes;
    cfg.nodesize = gp.nodesize;
    try {
      const Forest f = fit_forest(prob.train, cfg, gp.n_trees, derive_seed(fit_seed, r, g), 1);
      results[t] = {true, detail::model_loss(f, prob.train, cfg.task),
                    detail::model_loss(f, prob.test, cfg.task)};
    } catch (const Error&) {
      results[t] = {};
    }
  });

  SweepOutcome out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> train, test;
    for (std::size_t r = 0; r < spec.reps; ++r) {
      const auto& fl = results[r * grid.size() + g];
      if (!fl.ok) {
        ++out.failures;
        continue;
      }
      train.push_back(fl.train);
      test.push_back(fl.test);
    }
    const auto stats = aggregate_losses(train, test);
    const auto& gp = grid[g];
    out.rows.push_back(SweepResult{spec.experiment, spec.setting, spec.snr, gp.mtry, gp.maxnodes,
                                   gp.nodesize, gp.n_trees, stats.count, stats.mean_train,
                                   stats.mean_test, stats.se_test});
  }
  return out;
}

struct TuneOutcome {
  std::vector<std::optional<std::size_t>> optimal;  // per repetition
  SweepOutcome sweep;                               // per-nodesize aggregates
};

/// Per repetition, the nodesize whose forest (grown to maximal depth under
/// that nodesize) has the lowest test loss; ties go to the smaller nodesize.
inline TuneOutcome tune_nodesize(const SweepSpec& spec) {
  if (spec.nodesize.empty()) throw DomainError("tune_nodesize needs a nodesize grid");
  SweepSpec s = spec;
  std::sort(s.nodesize.begin(), s.nodesize.end());
  s.nodesize.erase(std::unique(s.nodesize.begin(), s.nodesize.end()), s.nodesize.end());
  s.maxnodes.clear();
  s.tree.maxnodes.reset();
  s.mtry = {spec.mtry.empty() ? spec.tree.mtry : spec.mtry.front()};
  s.n_trees = {spec.n_trees.empty() ? 500 : spec.n_trees.front()};

  const auto grid = detail::expand_grid(s);
  const auto problems = detail::draw_problems(s.problem, s.reps, s.master_seed, s.threads);
  const std::uint64_t fit_seed = derive_seed(s.master_seed, 1);
  std::vector<detail::FitLoss> results(s.reps * grid.size());
  parallel_for(results.size(), s.threads, [&](std::size_t t) {
    const std::size_t r = t / grid.size();
    const std::size_t g = t % grid.size();
    TreeConfig cfg = s.tree;
    cfg.mtry = grid[g].mtry;
    cfg.nodesize = grid[g].nodesize;
    try {
      const Forest f =
          fit_forest(problems[r].train, cfg, grid[g].n_trees, derive_seed(fit_seed, r, g), 1);
      results[t] = {true, detail::model_loss(f, problems[r].train, cfg.task),
                    detail::model_loss(f, problems[r].test, cfg.task)};
    } catch (const Error&) {
      results[t] = {};
    }
  });

  TuneOutcome out;
  for (std::size_t r = 0; r < s.reps; ++r) {
    std::optional<std::size_t> best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto& fl = results[r * grid.size() + g];
      if (fl.ok && fl.test < best_loss) {
        best_loss = fl.test;
        best = grid[g].nodesize;
      }
    }
    out.optimal.push_back(best);
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> train, test;
    for (std::size_t r = 0; r < s.reps; ++r) {
      const auto& fl = results[r * grid.size() + g];
      if (!fl.ok) {
        ++out.sweep.failures;
        continue;
      }
      train.push_back(fl.train);
      test.push_back(fl.test);
    }
    const auto stats = aggregate_losses(train, test);
    out.sweep.rows.push_back(SweepResult{s.experiment, s.setting, s.snr, grid[g].mtry, std::nullopt,
                                         grid[g].nodesize, grid[g].n_trees, stats.count,
                                         stats.mean_train, stats.mean_test, stats.se_test});
  }
  return out;
}

/// Grid sweep over RandFS ensembles (depth x mtry x members). Rows carry
/// the depth in the maxnodes column and the member count in n_trees.
struct RandFSSweepSpec {
  std::string experiment = "randfs-sweep";
  std::string setting;
  std::optional<double> snr;
  ProblemSource problem;
  RandFSConfig model;
  std::vector<std::size_t> depth;
  std::vector<std::size_t> mtry;
  std::vector<std::size_t> n_members;
  std::size_t reps = 1;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
};

inline SweepOutcome run_randfs_sweep(const RandFSSweepSpec& spec) {
  if (spec.reps < 1) throw DomainError("reps must be >= 1");
  if (!spec.problem) throw DomainError("sweep has no problem source");
  auto axis = [](const std::vector<std::size_t>& v, std::size_t fallback) {
    return v.empty() ? std::vector<std::size_t>{fallback} : v;
  };
  struct Point {
    std::size_t depth, mtry, members;
  };
  std::vector<Point> grid;
  for (auto m : axis(spec.mtry, spec.model.mtry))
    for (auto d : axis(spec.depth, spec.model.depth))
      for (auto b : axis(spec.n_members, spec.model.n_members)) grid.push_back({d, m, b});
  const auto problems = detail::draw_problems(spec.problem, spec.reps, spec.master_seed, spec.threads);
  const std::uint64_t fit_seed = derive_seed(spec.master_seed, 1);

  std::vector<detail::FitLoss> results(spec.reps * grid.size());
  parallel_for(results.size(), spec.threads, [&](std::size_t t) {
    const std::size_t r = t / grid.size();
    const std::size_t g = t % grid.size();
    const auto& prob = problems[r];
    RandFSConfig cfg = spec.model;
    cfg.depth = grid[g].depth;
    cfg.mtry = grid[g].mtry;
    cfg.n_members = grid[g].members;
    cfg.seed = derive_seed(fit_seed, r, g);
    try {
      const RandFSModel m = fit_randfs(prob.train, cfg, 1);
      results[t] = {true,
                    evaluate(predict_rows(m, prob.train), prob.train.response(), Task::Regression),
                    evaluate(predict_rows(m, prob.test), prob.test.response(), Task::Regression)};
    } catch (const Error&) {
      results[t] = {};
    }
  });

  SweepOutcome out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> train, test;
    for (std::size_t r = 0; r < spec.reps; ++r) {
      const auto& fl = results[r * grid.size() + g];
      if (!fl.ok) {
        ++out.failures;
        continue;
      }
      train.push_back(fl.train);
      test.push_back(fl.test);
    }
    const auto stats = aggregate_losses(train, test);
    out.rows.push_back(SweepResult{spec.experiment, spec.setting, spec.snr, grid[g].mtry,
                                   grid[g].depth, std::nullopt, grid[g].members, stats.count,
                                   stats.mean_train, stats.mean_test, stats.se_test});
  }
  return out;
}

enum class DepthPolicy { FullDepth, Tuned, Shallow };

inline const char* to_string(DepthPolicy p) {
  switch (p) {
    case DepthPolicy::FullDepth: return "full";
    case DepthPolicy::Tuned: return "tuned";
    case DepthPolicy::Shallow: return "shallow";
  }
  return "?";
}

struct DoubleDescentSpec {
  std::string experiment = "double-descent";
  std::string setting;
  ProblemSource problem;
  TreeConfig tree;  // task, mtry, nodesize, resample; maxnodes is overridden
  std::vector<std::size_t> phase1_maxnodes;
  std::vector<std::size_t> phase2_trees;
  DepthPolicy policy = DepthPolicy::FullDepth;
  std::size_t shallow_maxnodes = 10;
  std::size_t reps = 1;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
};

struct DoubleDescentOutcome {
  SweepOutcome phase1;  // single trees, one row per maxnodes
  SweepOutcome phase2;  // forests at the policy depth, one row per tree count
  std::vector<std::size_t> chosen_maxnodes;  // per repetition
};

/// Phase 1: one randomized tree per maxnodes value (raw curve). Phase 2: a
/// forest at the policy depth, scored at every requested tree count. Tree b
/// of the phase-2 forest is the same for every count, so counts are nested.
inline DoubleDescentOutcome run_double_descent(const DoubleDescentSpec& spec) {
  if (spec.reps < 1) throw DomainError("reps must be >= 1");
  if (spec.phase1_maxnodes.empty() && spec.policy == DepthPolicy::Tuned)
    throw DomainError("tuned depth needs a phase-1 maxnodes grid");
  for (std::size_t b : spec.phase2_trees)
    if (b < 1) throw DomainError("phase-2 tree counts must be >= 1");
  for (std::size_t m : spec.phase1_maxnodes)
    if (m < 2) throw DomainError("phase-1 maxnodes values must be >= 2");

  const auto problems = detail::draw_problems(spec.problem, spec.reps, spec.master_seed, spec.threads);
  for (const auto& p : problems) {
    for (std::size_t m : spec.phase1_maxnodes)
      if (m > p.train.n()) throw DomainError("phase-1 maxnodes exceeds the training size");
    if (spec.policy == DepthPolicy::Tuned && !p.validation)
      throw DomainError("tuned depth needs a validation set");
  }
  const Task task = spec.tree.task;
  const std::size_t g1 = spec.phase1_maxnodes.size();
  const std::uint64_t single_seed = derive_seed(spec.master_seed, 1);
  const std::uint64_t forest_seed = derive_seed(spec.master_seed, 2);

  struct SingleLoss {
    bool ok = false;
    double train = 0.0, test = 0.0, validation = std::numeric_limits<double>::infinity();
  };
  std::vector<SingleLoss> single(spec.reps * g1);
  parallel_for(single.size(), spec.threads, [&](std::size_t t) {
    const std::size_t r = t / g1, g = t % g1;
    const auto& prob = problems[r];
    TreeConfig cfg = spec.tree;
    cfg.maxnodes = spec.phase1_maxnodes[g];
    try {
      Rng rng(derive_seed(single_seed, r, g));
      const FittedTree tree = grow_tree(prob.train, cfg, rng);
      SingleLoss s;
      s.ok = true;
      s.train = evaluate(predict_rows(tree, prob.train), prob.train.response(), task);
      s.test = evaluate(predict_rows(tree, prob.test), prob.test.response(), task);
      if (prob.validation)
        s.validation = evaluate(predict_rows(tree, *prob.validation), prob.validation->response(), task);
      single[t] = s;
    } catch (const Error&) {
      single[t] = {};
    }
  });

  DoubleDescentOutcome out;
  const std::string setting =
      spec.setting.empty() ? to_string(spec.policy) : spec.setting + "/" + to_string(spec.policy);
  for (std::size_t g = 0; g < g1; ++g) {
    std::vector<double> train, test;
    for (std::size_t r = 0; r < spec.reps; ++r) {
      const auto& s = single[r * g1 + g];
      if (!s.ok) {
        ++out.phase1.failures;
        continue;
      }
      train.push_back(s.train);
      test.push_back(s.test);
    }
    const auto st = aggregate_losses(train, test);
    out.phase1.rows.push_back(SweepResult{spec.experiment + "-single", setting, std::nullopt,
                                          spec.tree.mtry, spec.phase1_maxnodes[g],
                                          spec.tree.nodesize, 1, st.count, st.mean_train,
                                          st.mean_test, st.se_test});
  }

  if (spec.phase2_trees.empty()) return out;
  const std::size_t max_trees =
      *std::max_element(spec.phase2_trees.begin(), spec.phase2_trees.end());
  const std::size_t g2 = spec.phase2_trees.size();
  std::vector<detail::FitLoss> forest_loss(spec.reps * g2);
  for (std::size_t r = 0; r < spec.reps; ++r) {
    const auto& prob = problems[r];
    std::size_t depth = prob.train.n();
    if (spec.policy == DepthPolicy::Shallow) depth = spec.shallow_maxnodes;
    if (spec.policy == DepthPolicy::Tuned) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < g1; ++g) {
        const auto& s = single[r * g1 + g];
        if (s.ok && s.validation < best) {
          best = s.validation;
          depth = spec.phase1_maxnodes[g];
        }
      }
    }
    out.chosen_maxnodes.push_back(depth);
    TreeConfig cfg = spec.tree;
    cfg.maxnodes = depth;
    try {
      const Forest f = fit_forest(prob.train, cfg, max_trees, derive_seed(forest_seed, r), spec.threads);
      for (std::size_t g = 0; g < g2; ++g) {
        const std::size_t b = spec.phase2_trees[g];
        auto score = [&](const Dataset& d) {
          std::vector<double> pred(d.n());
          for (std::size_t i = 0; i < d.n(); ++i) pred[i] = f.predict_first(d.row(i), b);
          return evaluate(pred, d.response(), task);
        };
        forest_loss[r * g2 + g] = {true, score(prob.train), score(prob.test)};
      }
    } catch (const Error&) {
    }
  }
  const bool same_depth =
      std::adjacent_find(out.chosen_maxnodes.begin(), out.chosen_maxnodes.end(),
                         std::not_equal_to<>()) == out.chosen_maxnodes.end();
  for (std::size_t g = 0; g < g2; ++g) {
    std::vector<double> train, test;
    for (std::size_t r = 0; r < spec.reps; ++r) {
      const auto& fl = forest_loss[r * g2 + g];
      if (!fl.ok) {
        ++out.phase2.failures;
        continue;
      }
      train.push_back(fl.train);
      test.push_back(fl.test);
    }
    const auto st = aggregate_losses(train, test);
    std::optional<std::size_t> depth;
    if (same_depth) depth = out.chosen_maxnodes.front();
    out.phase2.rows.push_back(SweepResult{spec.experiment + "-forest", setting, std::nullopt,
                                          spec.tree.mtry, depth, spec.tree.nodesize,
                                          spec.phase2_trees[g], st.count, st.mean_train,
                                          st.mean_test, st.se_test});
  }
  return out;
}

}  // namespace rfdepth
