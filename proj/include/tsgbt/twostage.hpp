#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "boost.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "tree.hpp"

namespace tsgbt {

enum class Mode { tsgbt, wgbt, sgbt };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::tsgbt: return "tsgbt";
    case Mode::wgbt: return "wgbt";
    case Mode::sgbt: return "sgbt";
  }
  return "?";
}

inline Mode mode_from_string(std::string_view s) {
  if (s == "tsgbt") return Mode::tsgbt;
  if (s == "wgbt") return Mode::wgbt;
  if (s == "sgbt") return Mode::sgbt;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

/// Main-effect stage defaults (max_depth 6, eta 0.1, gamma 4, colsample 0.7,
/// subsample 0.6, min_child_weight 2), ten-fold early stopping.
inline BoostParams default_stage1_params() {
  BoostParams p;
  p.n_rounds = 1000;
  p.learning_rate = 0.1;
  p.gamma = 4.0;
  p.lambda = 1.0;
  p.max_depth = 6;
  p.min_child_weight = 2.0;
  p.subsample = 0.6;
  p.colsample = 0.7;
  p.cv_folds = 10;
  p.patience = 20;
  return p;
}

/// HTE stage defaults (eta 0.01, max_depth 4, colsample 0.7, subsample 0.6,
/// gamma 8, min_child_weight 12), ten-fold early stopping.
inline BoostParams default_stage2_params() {
  BoostParams p;
  p.n_rounds = 2000;
  p.learning_rate = 0.01;
  p.gamma = 8.0;
  p.lambda = 1.0;
  p.max_depth = 4;
  p.min_child_weight = 12.0;
  p.subsample = 0.6;
  p.colsample = 0.7;
  p.cv_folds = 10;
  p.patience = 20;
  return p;
}

/// Stage-2 settings used for the simulation studies: the defaults above
/// with full-row trees and the one-standard-error round rule, which keeps
/// the chosen round count near zero when there is no effect heterogeneity.
inline BoostParams simulation_stage2_params() {
  BoostParams p = default_stage2_params();
  p.subsample = 1.0;
  p.cv_rule = CvRule::one_se;
  return p;
}

inline Estimand default_estimand(OutcomeKind k) {
  return k == OutcomeKind::continuous ? Estimand::meandiff : Estimand::riskratio;
}

/// CV strata: treatment arm, crossed with the outcome for binary data.
inline std::vector<int> cv_strata(const TrialDataset& data) {
  std::vector<int> s(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    s[i] = data.t()[i] == 1 ? 2 : 0;
    if (data.outcome_kind() == OutcomeKind::binary) s[i] += static_cast<int>(data.y()[i]);
  }
  return s;
}

inline void check_estimand(const TrialDataset& data, Estimand estimand) {
  if (estimand == Estimand::riskratio && data.outcome_kind() != OutcomeKind::binary)
    throw std::invalid_argument("risk-ratio estimand requires a binary outcome");
}

inline void check_binary_not_degenerate(std::span<const double> y, std::span<const std::size_t> rows = {}) {
  double events = 0.0;
  std::size_t n = 0;
  auto visit = [&](std::size_t i) { events += y[i]; ++n; };
  if (rows.empty())
    for (std::size_t i = 0; i < y.size(); ++i) visit(i);
  else
    for (auto i : rows) visit(i);
  if (events == 0.0 || events == static_cast<double>(n))
    throw std::invalid_argument("binary outcome is constant; logistic fit is degenerate");
}

/// Fits the augmentation ensemble: weighted squared error for continuous
/// outcomes, weighted logistic deviance for binary ones.
inline FitResult fit_stage1(const TrialDataset& data, const BoostParams& params, std::size_t threads = 1) {
  const bool binary = data.outcome_kind() == OutcomeKind::binary;
  if (binary) check_binary_not_degenerate(data.y());
  Objective obj(binary ? LossKind::stage1_logistic : LossKind::stage1_mse, data.y(), data.t(), data.weights());
  auto strata = cv_strata(data);
  auto fit = fit_boosted(obj, data.x(), params, strata, threads);
  fit.ensemble.feature_names = data.feature_names();
  return fit;
}

/// a0(x_i) for every row of x from a fitted stage-1 ensemble.
inline std::vector<double> augmentation_from_stage1(const Ensemble& stage1, const Matrix& x, Estimand estimand) {
  std::vector<double> a0(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) a0[i] = transform_stage1(stage1.predict(x.row(i)), estimand);
  return a0;
}

/// a0 from raw stage-1 scores (one per row).
inline std::vector<double> augmentation_from_scores(std::span<const double> a_hat, Estimand estimand) {
  std::vector<double> a0(a_hat.size());
  for (std::size_t i = 0; i < a_hat.size(); ++i) a0[i] = transform_stage1(a_hat[i], estimand);
  return a0;
}

/// Which stage-1 predictions feed the stage-2 augmentation.
enum class AugPredictions {
  out_of_fold,  ///< each row scored by the CV fold model that held it out
  in_sample,    ///< the refit stage-1 ensemble scored on its own training rows
};

inline std::string_view to_string(AugPredictions a) { return a == AugPredictions::out_of_fold ? "out_of_fold" : "in_sample"; }

inline AugPredictions aug_predictions_from_string(std::string_view s) {
  if (s == "out_of_fold") return AugPredictions::out_of_fold;
  if (s == "in_sample") return AugPredictions::in_sample;
  throw std::invalid_argument("unknown augmentation predictions '" + std::string(s) + "'");
}

/// Fits the HTE ensemble F with the augmented loss, or the unaugmented loss
/// when `a0` is empty.
inline FitResult fit_stage2(const TrialDataset& data, std::span<const double> a0, const BoostParams& params,
                            Estimand estimand, std::size_t threads = 1) {
  check_estimand(data, estimand);
  if (!a0.empty() && a0.size() != data.n())
    throw std::invalid_argument("fit_stage2: augmentation vector not aligned with rows");
  if (estimand == Estimand::riskratio) check_binary_not_degenerate(data.y());
  const bool aug = !a0.empty();
  LossKind kind = estimand == Estimand::meandiff
                      ? (aug ? LossKind::stage2_meandiff : LossKind::stage2_meandiff_noaug)
                      : (aug ? LossKind::stage2_riskratio : LossKind::stage2_riskratio_noaug);
  Objective obj(kind, data.y(), data.t(), data.weights(), a0);
  auto strata = cv_strata(data);
  auto fit = fit_boosted(obj, data.x(), params, strata, threads);
  fit.ensemble.feature_names = data.feature_names();
  return fit;
}

/// Where the stage-2 augmentation came from.
enum class AugSource { stage1, none, external };

inline std::string_view to_string(AugSource s) {
  switch (s) {
    case AugSource::stage1: return "stage1";
    case AugSource::none: return "none";
    case AugSource::external: return "external";
  }
  return "?";
}

struct TwoStageModel {
  Mode mode = Mode::tsgbt;
  Estimand estimand = Estimand::meandiff;
  AugSource aug_source = AugSource::stage1;
  AugPredictions aug_predictions = AugPredictions::out_of_fold;  ///< meaningful for aug_source == stage1
  std::optional<Ensemble> stage1;
  Ensemble stage2;
  BoostParams params1, params2;
  std::vector<std::string> feature_names;
  DiagnosticCurve curve1, curve2;

  /// Stage-2 prediction F(x) before the effect transform.
  double predict_f(std::span<const double> x_row) const { return stage2.predict(x_row); }
};

inline double predict_hte(const TwoStageModel& model, std::span<const double> x_row) {
  return transform_hte(model.predict_f(x_row), model.estimand);
}

/// Stage-1 fit and the a0 vector it implies for the training rows.
struct Stage1Augmentation {
  FitResult fit;
  std::vector<double> a0;
};

inline Stage1Augmentation stage1_augmentation(const TrialDataset& data, const BoostParams& params1, Estimand estimand,
                                              AugPredictions source, std::size_t threads = 1) {
  if (source == AugPredictions::out_of_fold && params1.cv_folds == 0)
    throw std::invalid_argument("out-of-fold augmentation requires stage-1 cross-validation (cv_folds >= 2)");
  Stage1Augmentation s{fit_stage1(data, params1, threads), {}};
  s.a0 = source == AugPredictions::out_of_fold ? augmentation_from_scores(s.fit.out_of_fold, estimand)
                                               : augmentation_from_stage1(s.fit.ensemble, data.x(), estimand);
  return s;
}

/// Stage 1, its transform to a0, then stage 2 on the augmented loss.
inline TwoStageModel fit_tsgbt(const TrialDataset& data, const BoostParams& params1, const BoostParams& params2,
                               Estimand estimand, std::size_t threads = 1,
                               AugPredictions source = AugPredictions::out_of_fold) {
  check_estimand(data, estimand);
  TwoStageModel m;
  m.mode = Mode::tsgbt;
  m.estimand = estimand;
  m.aug_source = AugSource::stage1;
  m.aug_predictions = source;
  m.params1 = params1;
  m.params2 = params2;
  m.feature_names = data.feature_names();
  auto s1 = stage1_augmentation(data, params1, estimand, source, threads);
  auto s2 = fit_stage2(data, s1.a0, params2, estimand, threads);
  m.stage1 = std::move(s1.fit.ensemble);
  m.curve1 = std::move(s1.fit.curve);
  m.stage2 = std::move(s2.ensemble);
  m.curve2 = std::move(s2.curve);
  return m;
}

/// Stage 2 with an augmentation supplied from outside (any first-stage
/// estimator), skipping the boosted stage 1.
inline TwoStageModel fit_with_augmentation(const TrialDataset& data, std::span<const double> a0,
                                           const BoostParams& params2, Estimand estimand, std::size_t threads = 1) {
  if (a0.size() != data.n()) throw std::invalid_argument("external augmentation not aligned with rows");
  TwoStageModel m;
  m.mode = Mode::tsgbt;
  m.estimand = estimand;
  m.aug_source = AugSource::external;
  m.params2 = params2;
  m.feature_names = data.feature_names();
  auto s2 = fit_stage2(data, a0, params2, estimand, threads);
  m.stage2 = std::move(s2.ensemble);
  m.curve2 = std::move(s2.curve);
  return m;
}

/// Weighted stage-2-only comparator (a0 = 0).
inline TwoStageModel fit_wgbt(const TrialDataset& data, const BoostParams& params2, Estimand estimand,
                              std::size_t threads = 1) {
  TwoStageModel m;
  m.mode = Mode::wgbt;
  m.estimand = estimand;
  m.aug_source = AugSource::none;
  m.params2 = params2;
  m.feature_names = data.feature_names();
  auto s2 = fit_stage2(data, {}, params2, estimand, threads);
  m.stage2 = std::move(s2.ensemble);
  m.curve2 = std::move(s2.curve);
  return m;
}

/// Separate per-arm regressions of the outcome on x.
struct SeparateModel {
  Estimand estimand = Estimand::meandiff;
  Ensemble treated, control;
  BoostParams params;
  std::vector<std::string> feature_names;
  DiagnosticCurve curve_treated, curve_control;

  /// Arm mean on the outcome scale.
  double arm_mean(const Ensemble& e, std::span<const double> x_row) const {
    double a = e.predict(x_row);
    return e.loss == to_string(LossKind::stage1_logistic) ? sigmoid(a) : a;
  }
};

inline double predict_hte(const SeparateModel& model, std::span<const double> x_row) {
  double m1 = model.arm_mean(model.treated, x_row);
  double m0 = model.arm_mean(model.control, x_row);
  return model.estimand == Estimand::meandiff ? m1 - m0 : m1 / m0;
}

/// Fits one standard-loss ensemble per arm (sampling weights only).
inline SeparateModel fit_sgbt(const TrialDataset& data, const BoostParams& params, Estimand estimand,
                              std::size_t threads = 1) {
  check_estimand(data, estimand);
  std::vector<std::size_t> rows_t, rows_c;
  for (std::size_t i = 0; i < data.n(); ++i) (data.t()[i] == 1 ? rows_t : rows_c).push_back(i);
  if (rows_t.empty() || rows_c.empty()) throw std::invalid_argument("fit_sgbt: both arms must be non-empty");
  const bool binary = data.outcome_kind() == OutcomeKind::binary;
  const LossKind kind = binary ? LossKind::stage1_logistic : LossKind::stage1_mse;
  if (binary) {
    check_binary_not_degenerate(data.y(), rows_t);
    check_binary_not_degenerate(data.y(), rows_c);
  }
  std::vector<int> strata(data.n(), 0);
  if (binary)
    for (std::size_t i = 0; i < data.n(); ++i) strata[i] = static_cast<int>(data.y()[i]);

  Objective obj(kind, data.y(), data.t(), data.w_sample());
  SeparateModel m;
  m.estimand = estimand;
  m.params = params;
  m.feature_names = data.feature_names();
  auto ft = fit_boosted(obj, data.x(), params, strata, threads, rows_t);
  BoostParams pc = params;
  pc.seed = substream_seed(params.seed, {1});
  auto fc = fit_boosted(obj, data.x(), pc, strata, threads, rows_c);
  m.treated = std::move(ft.ensemble);
  m.control = std::move(fc.ensemble);
  m.treated.feature_names = m.control.feature_names = data.feature_names();
  m.curve_treated = std::move(ft.curve);
  m.curve_control = std::move(fc.curve);
  return m;
}

}  // namespace tsgbt
