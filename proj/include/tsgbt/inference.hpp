#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "boost.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "twostage.hpp"

namespace tsgbt {

enum class DispersionKind { variance, mad };

inline std::string_view to_string(DispersionKind k) { return k == DispersionKind::variance ? "variance" : "mad"; }

inline DispersionKind dispersion_kind_from_string(std::string_view s) {
  if (s == "variance") return DispersionKind::variance;
  if (s == "mad") return DispersionKind::mad;
  throw std::invalid_argument("unknown dispersion statistic '" + std::string(s) + "'");
}

namespace detail {

inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Sample variance (n-1 denominator) or the unscaled median absolute
/// deviation of the estimated effects.
inline double dispersion_stat(std::span<const double> tau, DispersionKind kind) {
  const std::size_t n = tau.size();
  if (n < 2) throw std::invalid_argument("dispersion_stat: need at least two values");
  // Exact zero for constant input; the two-pass sum can leave rounding residue.
  auto [lo, hi] = std::minmax_element(tau.begin(), tau.end());
  if (*lo == *hi) return 0.0;
  if (kind == DispersionKind::variance) {
    double mean = 0.0;
    for (double v : tau) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : tau) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(n - 1);
  }
  std::vector<double> v(tau.begin(), tau.end());
  double med = detail::median_inplace(v);
  for (auto& d : v) d = std::abs(d - med);
  return detail::median_inplace(v);
}

enum class PValueRule {
  proportion,  ///< #{perm >= obs} / B
  plus_one,    ///< (1 + #{perm >= obs}) / (1 + B)
};

inline double permutation_p_value(double observed, std::span<const double> perm, PValueRule rule = PValueRule::proportion) {
  if (perm.empty()) throw std::invalid_argument("permutation_p_value: no permutation statistics");
  auto hits = static_cast<double>(std::count_if(perm.begin(), perm.end(), [&](double s) { return s >= observed; }));
  auto b = static_cast<double>(perm.size());
  return rule == PValueRule::proportion ? hits / b : (1.0 + hits) / (1.0 + b);
}

struct PermutationResult {
  double observed_stat = 0.0;
  std::vector<double> perm_stats;
  double p_value = 1.0;
  DispersionKind stat_kind = DispersionKind::variance;
  std::size_t B = 0;
  std::uint64_t seed = 0;
  std::size_t rounds = 0;  ///< stage-2 round count used by the observed fit
  PValueRule rule = PValueRule::proportion;
  bool retuned = false;
};

struct PermutationOptions {
  std::size_t B = 200;
  DispersionKind stat = DispersionKind::variance;
  std::uint64_t seed = 0;
  PValueRule rule = PValueRule::proportion;
  /// Re-run cross-validated round selection on every permuted replicate
  /// instead of reusing the observed fit's round count.
  bool retune = false;
  std::size_t threads = 1;
};

/// τ̂ on the training rows of a fitted stage-2 ensemble.
inline std::vector<double> in_sample_effects(const Ensemble& stage2, const Matrix& x, Estimand estimand) {
  std::vector<double> tau(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) tau[i] = transform_hte(stage2.predict(x.row(i)), estimand);
  return tau;
}

/// Conditional permutation test for a constant treatment effect.
///
/// The observed stage 2 is fit with `params2` (its round count chosen by CV
/// when params2.cv_folds > 0). Each replicate permutes whole rows of x while
/// y, t, the weights and a0 keep their original order, refits stage 2 with
/// the observed round count, and records the dispersion of τ̂ over the
/// permuted training rows.
inline PermutationResult permutation_test(const TrialDataset& data, std::span<const double> a0,
                                          const BoostParams& params2, Estimand estimand,
                                          const PermutationOptions& opt) {
  if (opt.B == 0) throw std::invalid_argument("permutation_test: B must be at least 1");
  if (!a0.empty() && a0.size() != data.n())
    throw std::invalid_argument("permutation_test: augmentation not aligned with rows");

  auto observed = fit_stage2(data, a0, params2, estimand, opt.threads);
  PermutationResult res;
  res.B = opt.B;
  res.seed = opt.seed;
  res.stat_kind = opt.stat;
  res.rule = opt.rule;
  res.retuned = opt.retune;
  res.rounds = observed.ensemble.trees.size();
  res.observed_stat = dispersion_stat(in_sample_effects(observed.ensemble, data.x(), estimand), opt.stat);

  BoostParams frozen = params2;
  if (!opt.retune) {
    frozen.cv_folds = 0;
    frozen.n_rounds = res.rounds;
  }
  res.perm_stats.assign(opt.B, 0.0);
  parallel_for(opt.B, opt.threads, [&](std::size_t b) {
    Rng rng = substream(opt.seed, {0xBE5E, b});
    std::vector<std::size_t> order(data.n());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    Matrix xp = data.x().permute_rows(order);
    BoostParams pb = frozen;
    pb.seed = substream_seed(opt.seed, {0xF17, b});
    LossKind kind = estimand == Estimand::meandiff
                        ? (a0.empty() ? LossKind::stage2_meandiff_noaug : LossKind::stage2_meandiff)
                        : (a0.empty() ? LossKind::stage2_riskratio_noaug : LossKind::stage2_riskratio);
    Objective obj(kind, data.y(), data.t(), data.weights(), a0);
    auto strata = cv_strata(data);
    auto fit = fit_boosted(obj, xp, pb, strata, 1);
    res.perm_stats[b] = dispersion_stat(in_sample_effects(fit.ensemble, xp, estimand), opt.stat);
  });
  res.p_value = permutation_p_value(res.observed_stat, res.perm_stats, opt.rule);
  return res;
}

}  // namespace tsgbt
