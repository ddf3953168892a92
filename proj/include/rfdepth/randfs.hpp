#pragma once

// Randomized forward selection ensembles: B linear models of depth d, each
// grown greedily where only `mtry` random not-yet-selected features are
// eligible at every step. Averaging the members shrinks each OLS
// coefficient by its selection frequency under an orthogonal design.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfdepth/errors.hpp"
#include "rfdepth/parallel.hpp"
#include "rfdepth/resample.hpp"
#include "rfdepth/rng.hpp"
#include "rfdepth/tabular.hpp"

namespace rfdepth {

struct OlsFit {
  double intercept = 0.0;
  std::vector<double> coefficients;
  double rss = 0.0;
};

/// Least squares with an intercept column. Throws SingularDesignError when
/// [1 X] is rank deficient.
inline OlsFit ols_fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& response) {
  const Eigen::Index n = features.rows();
  const Eigen::Index k = features.cols();
  if (response.size() != n) throw DomainError("design/response row mismatch");
  if (n == 0) throw EmptyDatasetError("ols_fit on zero rows");
  OlsFit fit;
  if (k == 0) {
    fit.intercept = response.sum() / static_cast<double>(n);
    fit.rss = (response.array() - fit.intercept).square().sum();
    return fit;
  }
  if (n < k + 1) throw SingularDesignError("more coefficients than observations");
  Eigen::MatrixXd design(n, k + 1);
  design.col(0).setOnes();
  design.rightCols(k) = features;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < k + 1) throw SingularDesignError("design with intercept is rank deficient");
  const Eigen::VectorXd beta = qr.solve(response);
  fit.intercept = beta(0);
  fit.coefficients.assign(beta.data() + 1, beta.data() + k + 1);
  fit.rss = (response - design * beta).squaredNorm();
  return fit;
}

namespace detail {

inline Eigen::MatrixXd design_columns(const Dataset& d, std::span<const std::size_t> cols) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d.n()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < d.n(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d.at(i, cols[j]);
  return x;
}

inline Eigen::VectorXd response_vector(const Dataset& d) {
  return Eigen::Map<const Eigen::VectorXd>(d.response().data(), static_cast<Eigen::Index>(d.n()));
}

}  // namespace detail

/// OLS on the listed feature columns of d, coefficients in `cols` order.
inline OlsFit ols_fit(const Dataset& d, std::span<const std::size_t> cols) {
  return ols_fit(detail::design_columns(d, cols), detail::response_vector(d));
}

/// Candidate whose addition to `selection` minimises the refit RSS. Ties go
/// to the lowest feature index; candidates giving a singular design are
/// skipped.
inline std::size_t forward_step(std::span<const std::size_t> selection,
                                std::span<const std::size_t> candidates, const Dataset& d) {
  if (candidates.empty()) throw DomainError("forward_step needs at least one candidate");
  std::vector<std::size_t> order(candidates.begin(), candidates.end());
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> cols(selection.begin(), selection.end());
  cols.push_back(0);
  const Eigen::VectorXd y = detail::response_vector(d);
  std::optional<std::size_t> best;
  double best_rss = std::numeric_limits<double>::infinity();
  for (std::size_t c : order) {
    if (std::find(selection.begin(), selection.end(), c) != selection.end())
      throw DomainError("candidate " + std::to_string(c) + " is already selected");
    cols.back() = c;
    try {
      const double rss = ols_fit(detail::design_columns(d, cols), y).rss;
      if (rss < best_rss) {
        best_rss = rss;
        best = c;
      }
    } catch (const SingularDesignError&) {
    }
  }
  if (!best) throw SingularDesignError("every augmented design is singular");
  return *best;
}

struct RandFSConfig {
  std::size_t depth = 1;
  std::size_t mtry = 1;
  std::size_t n_members = 1;
  Resample resample = Resample::none();
  std::uint64_t seed = 0;

  void validate(const Dataset& d) const {
    if (depth < 1 || depth > std::min(d.n() - 1, d.p()))
      throw DomainError("depth must lie in 1..min(n-1, p)");
    if (mtry < 1 || mtry > d.p()) throw DomainError("mtry outside 1..p");
    if (n_members < 1) throw DomainError("n_members must be >= 1");
    if (resample.mode == ResampleMode::Subsample)
      throw DomainError("RandFS members use either the full sample or a bootstrap");
  }
};

/// One member: features in selection order and their fitted coefficients.
struct RandFSMember {
  std::vector<std::size_t> selected;
  double intercept = 0.0;
  std::vector<double> coefficients;

  double predict(std::span<const double> x) const {
    double acc = intercept;
    for (std::size_t k = 0; k < selected.size(); ++k) acc += coefficients[k] * x[selected[k]];
    return acc;
  }
};

struct RandFSModel {
  double intercept = 0.0;
  std::vector<double> coefficients;  // length p, 0 where never selected
  std::vector<double> gamma;         // selection frequency per feature
  std::vector<RandFSMember> members;

  double predict(std::span<const double> x) const {
    if (x.size() != coefficients.size())
      throw DomainError("query has " + std::to_string(x.size()) + " features, model expects " +
                        std::to_string(coefficients.size()));
    double acc = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) acc += coefficients[j] * x[j];
    return acc;
  }
};

namespace detail {

inline RandFSMember fit_randfs_member(const Dataset& d, const RandFSConfig& cfg, Rng& rng) {
  const auto draw = resample(d.n(), cfg.resample, rng);
  const Dataset rows = cfg.resample.mode == ResampleMode::None ? d : d.subset(draw.indices);
  RandFSMember m;
  std::vector<std::size_t> available(d.p());
  std::iota(available.begin(), available.end(), std::size_t{0});
  for (std::size_t step = 0; step < cfg.depth; ++step) {
    const std::size_t k = std::min(cfg.mtry, available.size());
    std::vector<std::size_t> eligible =
        k == available.size() ? available
                              : rng.sample_without_replacement<std::size_t>(available, k);
    const std::size_t chosen = forward_step(m.selected, eligible, rows);
    m.selected.push_back(chosen);
    available.erase(std::find(available.begin(), available.end(), chosen));
  }
  const OlsFit fit = ols_fit(rows, m.selected);
  m.intercept = fit.intercept;
  m.coefficients = fit.coefficients;
  return m;
}

}  // namespace detail

/// Fits B members on streams derive_seed(cfg.seed, b) and averages them.
inline RandFSModel fit_randfs(const Dataset& d, const RandFSConfig& cfg, unsigned threads = 1) {
  if (d.task() != Task::Regression) throw DomainError("RandFS needs a regression response");
  cfg.validate(d);
  RandFSModel model;
  model.members.resize(cfg.n_members);
  parallel_for(cfg.n_members, threads, [&](std::size_t b) {
    Rng rng(derive_seed(cfg.seed, b));
    model.members[b] = detail::fit_randfs_member(d, cfg, rng);
  });
  const double n_members = static_cast<double>(cfg.n_members);
  std::vector<double> coef_sum(d.p(), 0.0), count(d.p(), 0.0);
  double intercept_sum = 0.0;
  for (const auto& m : model.members) {
    intercept_sum += m.intercept;
    for (std::size_t k = 0; k < m.selected.size(); ++k) {
      coef_sum[m.selected[k]] += m.coefficients[k];
      count[m.selected[k]] += 1.0;
    }
  }
  model.intercept = intercept_sum / n_members;
  model.coefficients.resize(d.p());
  model.gamma.resize(d.p());
  for (std::size_t j = 0; j < d.p(); ++j) {
    model.coefficients[j] = coef_sum[j] / n_members;
    model.gamma[j] = count[j] / n_members;
  }
  return model;
}

inline double predict_randfs(const RandFSModel& m, std::span<const double> x) { return m.predict(x); }

}  // namespace rfdepth
