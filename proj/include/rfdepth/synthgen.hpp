#pragma once

// SNR-controlled linear-model problems: AR(1)-correlated Gaussian
// covariates, "beta-type 2" coefficients (first s ones) and Gaussian noise
// whose variance is set from the requested signal-to-noise ratio.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rfdepth/errors.hpp"
#include "rfdepth/rng.hpp"
#include "rfdepth/tabular.hpp"

namespace rfdepth {

struct SyntheticSpec {
  std::size_t n = 100;
  std::size_t p = 10;
  std::size_t s = 5;
  double rho = 0.35;
  double snr = 1.0;
  std::size_t test_size = 100;
  std::size_t validation_size = 0;  // extra independent draw, 0 = none
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1 || p < 1) throw DomainError("n and p must be >= 1");
    if (s < 1 || s > p) throw DomainError("s must lie in 1..p");
    if (!(snr > 0.0) || !std::isfinite(snr)) throw DomainError("snr must be positive");
    if (!(std::abs(rho) < 1.0)) throw DomainError("|rho| must be < 1");
    if (test_size < 1) throw DomainError("test_size must be >= 1");
  }
};

struct NamedSetting {
  std::string_view name;
  std::size_t n, p, s;
};

/// The four simulation regimes.
inline constexpr std::array<NamedSetting, 4> kNamedSettings{{
    {"low", 100, 10, 5},
    {"medium", 500, 100, 5},
    {"high-5", 50, 1000, 5},
    {"high-10", 100, 1000, 10},
}};

inline std::optional<NamedSetting> find_setting(std::string_view name) {
  for (const auto& s : kNamedSettings)
    if (s.name == name) return s;
  return std::nullopt;
}

/// p x p AR(1) Toeplitz matrix rho^|i-j| (row-major).
inline std::vector<double> make_sigma(std::size_t p, double rho) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("|rho| must be < 1");
  std::vector<double> sigma(p * p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      sigma[i * p + j] = std::pow(rho, static_cast<double>(i > j ? i - j : j - i));
  return sigma;
}

/// beta' Sigma beta.
inline double quadratic_form(std::span<const double> beta, std::span<const double> sigma) {
  const std::size_t p = beta.size();
  if (sigma.size() != p * p) throw DomainError("beta/sigma dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    if (beta[i] == 0.0) continue;
    double row = 0.0;
    for (std::size_t j = 0; j < p; ++j) row += sigma[i * p + j] * beta[j];
    acc += beta[i] * row;
  }
  return acc;
}

inline double noise_variance(std::span<const double> beta, std::span<const double> sigma,
                             double snr) {
  if (!(snr > 0.0)) throw DomainError("snr must be positive");
  const double signal = quadratic_form(beta, sigma);
  if (!(signal > 0.0)) throw DegenerateSpecError("zero signal: cannot reach the requested SNR");
  return signal / snr;
}

/// Ten SNR levels from 0.05 to 6, equally spaced on a log scale.
inline std::array<double, 10> snr_grid() {
  constexpr double lo = 0.05, hi = 6.0;
  std::array<double, 10> g{};
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / 9.0);
  g.front() = lo;
  g.back() = hi;
  return g;
}

inline std::vector<double> beta_type2(std::size_t p, std::size_t s) {
  std::vector<double> beta(p, 0.0);
  for (std::size_t j = 0; j < s && j < p; ++j) beta[j] = 1.0;
  return beta;
}

struct GeneratedProblem {
  Dataset train;
  Dataset test;
  std::optional<Dataset> validation;
  std::vector<double> beta;
  double sigma2 = 0.0;
  double signal = 0.0;
};

namespace detail {

/// Rows of N_p(0, Sigma_AR1) via X_1 = Z_1, X_j = rho X_{j-1} + sqrt(1-rho^2) Z_j,
/// responses x'beta + sigma*eps. Consumes p+1 normals per row.
inline Dataset draw_linear_rows(std::size_t rows, std::size_t p, double rho,
                                std::span<const double> beta, double sigma, Rng& rng) {
  const double innov = std::sqrt(1.0 - rho * rho);
  std::vector<double> x(rows * p), y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double* xi = x.data() + i * p;
    xi[0] = rng.normal();
    for (std::size_t j = 1; j < p; ++j) xi[j] = rho * xi[j - 1] + innov * rng.normal();
    double mu = 0.0;
    for (std::size_t j = 0; j < p; ++j)
      if (beta[j] != 0.0) mu += beta[j] * xi[j];
    y[i] = mu + sigma * rng.normal();
  }
  return Dataset(std::move(x), p, std::move(y), Task::Regression);
}

}  // namespace detail

/// Independent train / test (/ validation) draws from one law. Each part
/// uses its own child stream of spec.seed.
inline GeneratedProblem generate(const SyntheticSpec& spec) {
  spec.validate();
  auto beta = beta_type2(spec.p, spec.s);
  // beta' Sigma beta for beta-type 2 only touches the leading s x s block.
  const auto sigma_s = make_sigma(spec.s, spec.rho);
  const std::span<const double> leading = std::span<const double>(beta).first(spec.s);
  const double signal = quadratic_form(leading, sigma_s);
  const double sigma2 = noise_variance(leading, sigma_s, spec.snr);
  const double sd = std::sqrt(sigma2);
  Rng train_rng(derive_seed(spec.seed, 0));
  Rng test_rng(derive_seed(spec.seed, 1));
  Rng val_rng(derive_seed(spec.seed, 2));
  auto train = detail::draw_linear_rows(spec.n, spec.p, spec.rho, beta, sd, train_rng);
  auto test = detail::draw_linear_rows(spec.test_size, spec.p, spec.rho, beta, sd, test_rng);
  std::optional<Dataset> val;
  if (spec.validation_size > 0)
    val = detail::draw_linear_rows(spec.validation_size, spec.p, spec.rho, beta, sd, val_rng);
  return GeneratedProblem{std::move(train), std::move(test), std::move(val), std::move(beta),
                          sigma2, signal};
}

/// Binary problem with a known Bayes error: X ~ N(0, I_p), clean label
/// 1{x_1 + ... + x_s > 0}, flipped independently with probability
/// `flip_rate`. The Bayes error equals flip_rate (< 0.5).
struct LabelNoiseSpec {
  std::size_t n = 500;
  std::size_t p = 20;
  std::size_t s = 5;
  double flip_rate = 0.2;
  std::size_t test_size = 500;
  std::size_t validation_size = 0;
  std::uint64_t seed = 0;
};

struct LabelNoiseProblem {
  Dataset train;
  Dataset test;
  std::optional<Dataset> validation;
};

namespace detail {

inline Dataset draw_label_noise_rows(std::size_t rows, const LabelNoiseSpec& spec, Rng& rng) {
  std::vector<double> x(rows * spec.p), y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double score = 0.0;
    for (std::size_t j = 0; j < spec.p; ++j) {
      const double v = rng.normal();
      x[i * spec.p + j] = v;
      if (j < spec.s) score += v;
    }
    const bool clean = score > 0.0;
    const bool flip = rng.uniform01() < spec.flip_rate;
    y[i] = (clean != flip) ? 1.0 : 0.0;
  }
  return Dataset(std::move(x), spec.p, std::move(y), Task::Classification, 2);
}

}  // namespace detail

inline LabelNoiseProblem generate_label_noise(const LabelNoiseSpec& spec) {
  if (spec.n < 1 || spec.p < 1 || spec.s < 1 || spec.s > spec.p || spec.test_size < 1)
    throw DomainError("invalid label-noise spec");
  if (!(spec.flip_rate >= 0.0 && spec.flip_rate < 0.5)) throw DomainError("flip_rate must be in [0, 0.5)");
  Rng train_rng(derive_seed(spec.seed, 0));
  Rng test_rng(derive_seed(spec.seed, 1));
  Rng val_rng(derive_seed(spec.seed, 2));
  LabelNoiseProblem out{detail::draw_label_noise_rows(spec.n, spec, train_rng),
                        detail::draw_label_noise_rows(spec.test_size, spec, test_rng),
                        std::nullopt};
  if (spec.validation_size > 0)
    out.validation = detail::draw_label_noise_rows(spec.validation_size, spec, val_rng);
  return out;
}

}  // namespace rfdepth
