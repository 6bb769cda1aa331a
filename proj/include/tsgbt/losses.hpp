#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tsgbt {

enum class Estimand { meandiff, riskratio };

inline std::string_view to_string(Estimand e) { return e == Estimand::meandiff ? "meandiff" : "riskratio"; }

inline Estimand estimand_from_string(std::string_view s) {
  if (s == "meandiff") return Estimand::meandiff;
  if (s == "riskratio") return Estimand::riskratio;
  throw std::invalid_argument("unknown estimand '" + std::string(s) + "'");
}

struct GradHess {
  double g;
  double h;
};

inline double sigmoid(double a) noexcept {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  double e = std::exp(a);
  return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

/// log(1 + e^a) without overflow.
inline double softplus(double a) noexcept { return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

// ---------------------------------------------------------------------------
// Per-sample loss summands. `w` is the combined randomization x sampling
// weight; `a0` the augmentation value (0 for the unaugmented losses).

/// w (y - A)^2
inline double loss_stage1_continuous(double y, double a, double w) noexcept { return w * (y - a) * (y - a); }

inline GradHess grad_hess_stage1_continuous(double y, double a, double w) noexcept {
  return {-2.0 * w * (y - a), 2.0 * w};
}

/// Weighted Bernoulli deviance on the logit scale, w [log(1 + e^A) - y A].
inline double loss_stage1_binary(double y, double a, double w) noexcept { return w * (softplus(a) - y * a); }

inline GradHess grad_hess_stage1_binary(double y, double a, double w) noexcept {
  double s = sigmoid(a);
  return {w * (s - y), w * s * (1.0 - s)};
}

/// w (y - a0 - F t)^2
inline double loss_stage2_continuous(double y, double a0, double f, int t, double w) noexcept {
  double r = y - a0 - f * t;
  return w * r * r;
}

inline GradHess grad_hess_stage2_continuous(double y, double a0, double f, int t, double w) noexcept {
  return {-2.0 * w * t * (y - a0 - f * t), 2.0 * w};
}

/// w [(1 - y - a0) F t + y exp(-F t)]
inline double loss_stage2_binary(double y, double a0, double f, int t, double w) noexcept {
  return w * ((1.0 - y - a0) * f * t + y * std::exp(-f * t));
}

inline GradHess grad_hess_stage2_binary(double y, double a0, double f, int t, double w) noexcept {
  double e = y * std::exp(-f * t);
  return {w * ((1.0 - y - a0) * t - t * e), w * e};
}

// ---------------------------------------------------------------------------

/// Variance-minimizing augmentation for a given F(X), with mu1 = E(Y|X,T=1)
/// and mu0 = E(Y|X,T=-1).
inline double optimal_aug_general(double mu1, double mu0, double f, double p_treat, Estimand estimand) {
  if (!(p_treat > 0.0 && p_treat < 1.0))
    throw std::invalid_argument("optimal_aug_general: p_treat must lie in (0,1)");
  const double q = 1.0 - p_treat;
  if (estimand == Estimand::meandiff) return mu1 * q + mu0 * p_treat - f * (q - p_treat);
  if (!(mu1 > 0.0 && mu1 < 1.0 && mu0 > 0.0 && mu0 < 1.0))
    throw std::invalid_argument("optimal_aug_general: risk-ratio means must lie in (0,1)");
  return 1.0 - (1.0 + std::exp(-f)) * mu1 * q - (1.0 + std::exp(f)) * mu0 * p_treat;
}

/// Maps a stage-1 prediction to the augmentation a0. The continuous stage-1
/// fit targets (mu1 + mu0)/2 directly; the binary one targets it through the
/// logit, and the risk-ratio augmentation is 1 - (mu1 + mu0).
inline double transform_stage1(double a_hat, Estimand estimand) noexcept {
  return estimand == Estimand::meandiff ? a_hat : 1.0 - 2.0 * sigmoid(a_hat);
}

/// Maps a stage-2 prediction F to the treatment effect: 2F or e^F.
inline double transform_hte(double f_hat, Estimand estimand) noexcept {
  return estimand == Estimand::meandiff ? 2.0 * f_hat : std::exp(f_hat);
}

// ---------------------------------------------------------------------------
// Loss selection by identifier.

enum class LossKind {
  stage1_mse,
  stage1_logistic,
  stage2_meandiff,
  stage2_riskratio,
  stage2_meandiff_noaug,
  stage2_riskratio_noaug,
};

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::stage1_mse: return "stage1_mse";
    case LossKind::stage1_logistic: return "stage1_logistic";
    case LossKind::stage2_meandiff: return "stage2_meandiff";
    case LossKind::stage2_riskratio: return "stage2_riskratio";
    case LossKind::stage2_meandiff_noaug: return "stage2_meandiff_noaug";
    case LossKind::stage2_riskratio_noaug: return "stage2_riskratio_noaug";
  }
  return "?";
}

inline LossKind loss_kind_from_string(std::string_view s) {
  for (auto k : {LossKind::stage1_mse, LossKind::stage1_logistic, LossKind::stage2_meandiff,
                 LossKind::stage2_riskratio, LossKind::stage2_meandiff_noaug, LossKind::stage2_riskratio_noaug})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown loss kind '" + std::string(s) + "'");
}

inline bool is_augmented(LossKind k) noexcept {
  return k == LossKind::stage2_meandiff || k == LossKind::stage2_riskratio;
}

inline bool is_stage2(LossKind k) noexcept {
  return k != LossKind::stage1_mse && k != LossKind::stage1_logistic;
}

/// A loss identifier with its augmentation vector, when it takes one.
struct LossSpec {
  LossKind kind;
  std::optional<std::vector<double>> aug;

  void validate(std::size_t n) const {
    if (is_augmented(kind)) {
      if (!aug) throw std::invalid_argument(std::string(to_string(kind)) + " requires an augmentation vector");
      if (aug->size() != n) throw std::invalid_argument("augmentation vector is not aligned with the dataset");
    } else if (aug) {
      throw std::invalid_argument(std::string(to_string(kind)) + " does not take an augmentation vector");
    }
  }
};

}  // namespace tsgbt
