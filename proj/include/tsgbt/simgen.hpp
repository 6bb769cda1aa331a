#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace tsgbt {

enum class CovStructure { ar1, compound_symmetric, independent };

inline std::string_view to_string(CovStructure c) {
  switch (c) {
    case CovStructure::ar1: return "ar1";
    case CovStructure::compound_symmetric: return "compound_symmetric";
    case CovStructure::independent: return "independent";
  }
  return "?";
}

inline CovStructure cov_structure_from_string(std::string_view s) {
  if (s == "ar1") return CovStructure::ar1;
  if (s == "compound_symmetric") return CovStructure::compound_symmetric;
  if (s == "independent") return CovStructure::independent;
  throw std::invalid_argument("unknown covariance structure '" + std::string(s) + "'");
}

/// Nonzero pairwise interaction coefficient beta_ij (1-based, i < j).
struct PairCoef {
  std::size_t i, j;
  double coef;
  bool operator==(const PairCoef&) const = default;
};

/// Generating model of a simulated trial.
///
/// With xt = (1, x_1..x_p) and
///   F(x) = beta_0 + sum_j (beta_j x_j + gamma_j x_j^2) + sum_{i<j} beta_ij x_i x_j,
/// continuous outcomes are  Y = (alpha . xt)^2 + effect_multiplier F(x) T + sigma0 eps,
/// binary outcomes solve    log(P1/P0) = effect_multiplier F(x),
///                          log(P1 P0 / ((1-P1)(1-P0))) = -C - (alpha . xt)^2.
struct SimSpec {
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  std::string setting;
  std::size_t n = 300;
  std::size_t p = 50;
  double rho = 0.5;
  CovStructure cov_structure = CovStructure::ar1;
  std::vector<double> alpha;  ///< alpha_0..alpha_p
  std::vector<double> beta;   ///< beta_0..beta_p
  std::vector<double> gamma;  ///< gamma_0..gamma_p (gamma_0 unused)
  std::vector<PairCoef> pairs;
  double effect_multiplier = 0.5;
  double sigma0 = 2.0;
  double C = 2.5;
  double p_treat = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("SimSpec: " + m); };
    if (n == 0) fail("n must be positive");
    if (p == 0) fail("p must be positive");
    if (alpha.size() != p + 1 || beta.size() != p + 1 || gamma.size() != p + 1)
      fail("coefficient vectors must have length p+1 (setting '" + setting + "' with p=" + std::to_string(p) + ")");
    for (const auto& pc : pairs)
      if (pc.i < 1 || pc.j > p || pc.i >= pc.j) fail("pair coefficient indices out of range");
    if (!(rho > -1.0 && rho < 1.0)) fail("rho must lie in (-1,1)");
    if (cov_structure == CovStructure::compound_symmetric && p > 1 &&
        !(rho > -1.0 / static_cast<double>(p - 1)))
      fail("compound symmetric correlation requires rho > -1/(p-1)");
    if (outcome_kind == OutcomeKind::continuous && !(sigma0 > 0.0)) fail("sigma0 must be positive");
    if (!(p_treat > 0.0 && p_treat < 1.0)) fail("p_treat must lie in (0,1)");
  }

  double main_linear(std::span<const double> x) const {
    double s = alpha[0];
    for (std::size_t j = 1; j <= p; ++j) s += alpha[j] * x[j - 1];
    return s;
  }

  double interaction(std::span<const double> x) const {
    double f = beta[0];
    for (std::size_t j = 1; j <= p; ++j) f += beta[j] * x[j - 1] + gamma[j] * x[j - 1] * x[j - 1];
    for (const auto& pc : pairs) f += pc.coef * x[pc.i - 1] * x[pc.j - 1];
    return f;
  }
};

struct TruthedDataset {
  TrialDataset data;
  std::vector<double> true_tau;

  double prevalence() const {
    double s = 0.0;
    for (double v : data.y()) s += v;
    return s / static_cast<double>(data.n());
  }
};

/// n draws from N(0, Sigma): AR(1) Sigma_ij = rho^|i-j|, compound symmetric
/// rho + (1-rho) 1[i=j], or identity.
inline Matrix sample_covariates(std::size_t n, std::size_t p, double rho, CovStructure structure, Rng& rng) {
  if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("sample_covariates: rho must lie in (-1,1)");
  if (structure == CovStructure::compound_symmetric && p > 1 && !(rho > -1.0 / static_cast<double>(p - 1)))
    throw std::invalid_argument("sample_covariates: rho not positive definite for compound symmetry");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, p);
  const double innov = std::sqrt(1.0 - rho * rho);
  // compound symmetry: x = sqrt(1-rho) z + c (sum z) 1
  const double a = std::sqrt(1.0 - rho);
  const double c = p > 0 ? (-a + std::sqrt(std::max(0.0, (1.0 - rho) + static_cast<double>(p) * rho))) /
                               static_cast<double>(p)
                         : 0.0;
  std::vector<double> z(p);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    switch (structure) {
      case CovStructure::independent:
        for (std::size_t j = 0; j < p; ++j) row[j] = normal(rng);
        break;
      case CovStructure::ar1:
        for (std::size_t j = 0; j < p; ++j) row[j] = j == 0 ? normal(rng) : rho * row[j - 1] + innov * normal(rng);
        break;
      case CovStructure::compound_symmetric: {
        double sum = 0.0;
        for (std::size_t j = 0; j < p; ++j) sum += (z[j] = normal(rng));
        for (std::size_t j = 0; j < p; ++j) row[j] = a * z[j] + c * sum;
        break;
      }
    }
  }
  return x;
}

/// The (P1, P0) in (0,1)^2 with log(P1/P0) = r and odds product
/// log(P1 P0 / ((1-P1)(1-P0))) = q. The odds product increases in P0 on
/// (0, min(1, e^-r)), so bisection on P0 finds the unique root; it runs to
/// full double precision (interval width well below 1e-12).
inline std::pair<double, double> solve_risk_pair(double r, double q) {
  const double k = std::exp(r);
  auto excess = [&](double p0) {
    double p1 = k * p0;
    return std::log(p1) + std::log(p0) - std::log1p(-p1) - std::log1p(-p0) - q;
  };
  double lo = 0.0, hi = std::min(1.0, 1.0 / k);
  for (int it = 0; it < 2000; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (excess(mid) < 0.0) lo = mid;
    else hi = mid;
  }
  double p0 = 0.5 * (lo + hi);
  return {k * p0, p0};
}

/// Continuous outcome model; true_tau = E[Y|x,T=1] - E[Y|x,T=-1] = 2 m F(x).
inline TruthedDataset gen_continuous(const SimSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.outcome_kind != OutcomeKind::continuous) throw std::invalid_argument("gen_continuous: spec is not continuous");
  Matrix x = sample_covariates(spec.n, spec.p, spec.rho, spec.cov_structure, rng);
  std::bernoulli_distribution treat(spec.p_treat);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> y(spec.n), tau(spec.n);
  std::vector<int> t(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto row = x.row(i);
    t[i] = treat(rng) ? 1 : -1;
    double main = spec.main_linear(row);
    double f = spec.interaction(row);
    y[i] = main * main + spec.effect_multiplier * f * t[i] + spec.sigma0 * normal(rng);
    tau[i] = 2.0 * spec.effect_multiplier * f;
  }
  return {TrialDataset::make(std::move(y), std::move(t), std::move(x), spec.p_treat, OutcomeKind::continuous),
          std::move(tau)};
}

/// Binary outcome from the relative-risk / odds-product model;
/// true_tau = P1/P0 = exp(m F(x)).
inline TruthedDataset gen_binary(const SimSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.outcome_kind != OutcomeKind::binary) throw std::invalid_argument("gen_binary: spec is not binary");
  Matrix x = sample_covariates(spec.n, spec.p, spec.rho, spec.cov_structure, rng);
  std::bernoulli_distribution treat(spec.p_treat);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> y(spec.n), tau(spec.n);
  std::vector<int> t(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto row = x.row(i);
    t[i] = treat(rng) ? 1 : -1;
    double main = spec.main_linear(row);
    double r = spec.effect_multiplier * spec.interaction(row);
    double q = -spec.C - main * main;
    auto [p1, p0] = solve_risk_pair(r, q);
    y[i] = unif(rng) < (t[i] == 1 ? p1 : p0) ? 1.0 : 0.0;
    tau[i] = std::exp(r);
  }
  return {TrialDataset::make(std::move(y), std::move(t), std::move(x), spec.p_treat, OutcomeKind::binary),
          std::move(tau)};
}

inline TruthedDataset generate(const SimSpec& spec, Rng& rng) {
  return spec.outcome_kind == OutcomeKind::continuous ? gen_continuous(spec, rng) : gen_binary(spec, rng);
}

namespace detail {

inline SimSpec blank_spec(OutcomeKind kind, std::string setting, std::size_t n, std::size_t p) {
  SimSpec s;
  s.outcome_kind = kind;
  s.setting = std::move(setting);
  s.n = n;
  s.p = p;
  s.alpha.assign(p + 1, 0.0);
  s.beta.assign(p + 1, 0.0);
  s.gamma.assign(p + 1, 0.0);
  return s;
}

inline void need_p(std::size_t p, std::size_t min_p, const std::string& setting) {
  if (p < min_p)
    throw std::invalid_argument("setting '" + setting + "' needs p >= " + std::to_string(min_p) +
                                " covariates, got " + std::to_string(p));
}

/// alpha_0 = 1/sqrt(d), alpha_j = 1/(2 sqrt(d)) for j = 3..10.
inline void scaled_main_effect(SimSpec& s, double d) {
  s.alpha[0] = 1.0 / std::sqrt(d);
  for (std::size_t j = 3; j <= 10; ++j) s.alpha[j] = 1.0 / (2.0 * std::sqrt(d));
}

inline void set_leading(std::vector<double>& v, std::initializer_list<double> vals) {
  std::size_t j = 0;
  for (double x : vals) v[j++] = x;
}

}  // namespace detail

/// Permutation-test null scenarios P1 (strong), P2 (weak) and P3 (no main
/// effect): continuous Y = main + 0.8 T + 2 eps; binary log RR = 0.3, C = 2.
inline SimSpec permutation_scenario_spec(const std::string& scenario, OutcomeKind kind, std::size_t n, std::size_t p) {
  auto s = detail::blank_spec(kind, scenario, n, p);
  if (scenario == "P1" || scenario == "P2") {
    detail::need_p(p, 10, scenario);
    detail::scaled_main_effect(s, scenario == "P1" ? 3.0 : 6.0);
  } else if (scenario != "P3") {
    throw std::invalid_argument("unknown permutation scenario '" + scenario + "'");
  }
  s.rho = 0.5;
  s.cov_structure = CovStructure::ar1;
  s.effect_multiplier = 1.0;
  if (kind == OutcomeKind::continuous) {
    s.beta[0] = 0.8;
    s.sigma0 = 2.0;
  } else {
    s.beta[0] = 0.3;
    s.C = 2.0;
  }
  return s;
}

/// Continuous Settings 1-4 and binary Settings 1-3,
/// plus the permutation scenarios P1-P3. AR(1) covariates with rho = 0.5.
inline SimSpec make_sim_spec(OutcomeKind kind, const std::string& setting, std::size_t n, std::size_t p) {
  if (!setting.empty() && setting[0] == 'P') return permutation_scenario_spec(setting, kind, n, p);
  auto s = detail::blank_spec(kind, setting, n, p);
  s.rho = 0.5;
  s.cov_structure = CovStructure::ar1;
  if (kind == OutcomeKind::continuous) {
    s.effect_multiplier = 0.5;
    s.sigma0 = 2.0;
    if (setting == "1") {
      detail::need_p(p, 5, setting);
      detail::set_leading(s.alpha, {0.4, 0.6, -0.6, 0.6, 0.6});
      detail::set_leading(s.beta, {0.8, 0.8, -0.8, 0.8, 0.8});
      return s;
    }
    if (setting != "2" && setting != "3" && setting != "4")
      throw std::invalid_argument("unknown continuous setting '" + setting + "'");
    detail::need_p(p, 10, setting);
    detail::scaled_main_effect(s, 3.0);
    double b = setting == "2" ? 1.6 : setting == "3" ? 0.8 : 0.0;
    detail::set_leading(s.beta, {0.8, b, -b, b, -b});
    // beta_j (x_j + x_j^2)
    for (std::size_t j = 1; j <= 4; ++j) s.gamma[j] = s.beta[j];
    if (b != 0.0) s.pairs = {{1, 2, b}, {1, 5, b}};
    return s;
  }
  s.effect_multiplier = 2.0;
  detail::need_p(p, 5, setting);
  detail::set_leading(s.alpha, {0.4, 0.6, -0.6, 0.6, 0.6});
  if (setting == "1") {
    detail::set_leading(s.beta, {0.3, 0.3, 0.4, 0.3, 0.4});
    detail::set_leading(s.gamma, {0.0, 0.4, -0.4, 0.4, 0.4});
    s.pairs = {{1, 2, 0.5}, {1, 5, 0.5}};
    s.C = 2.5;
  } else if (setting == "2") {
    detail::set_leading(s.beta, {0.1, 0.1, 0.2, 0.1, 0.2});
    detail::set_leading(s.gamma, {0.0, 0.2, -0.2, 0.2, 0.2});
    s.pairs = {{1, 2, 0.5}, {1, 5, 0.5}};
    s.C = 2.5;
  } else if (setting == "3") {
    s.beta[0] = 0.3;
    s.C = 2.0;
  } else {
    throw std::invalid_argument("unknown binary setting '" + setting + "'");
  }
  return s;
}

inline TruthedDataset gen_permutation_scenario(const std::string& scenario, OutcomeKind kind, std::size_t n,
                                               std::size_t p, Rng& rng) {
  return generate(permutation_scenario_spec(scenario, kind, n, p), rng);
}

}  // namespace tsgbt
