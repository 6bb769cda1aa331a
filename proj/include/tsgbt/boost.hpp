#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "data.hpp"
#include "losses.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "tree.hpp"

namespace tsgbt {

/// Per-sample loss, gradient and hessian for one of the six fitting
/// problems. Holds views into caller-owned vectors, indexed by row.
class Objective {
 public:
  Objective(LossKind kind, std::span<const double> y, std::span<const int> t, std::span<const double> w,
            std::span<const double> a0 = {})
      : kind_(kind), y_(y), t_(t), w_(w), a0_(a0) {
    if (t_.size() != y_.size() && is_stage2(kind_))
      throw std::invalid_argument("objective: treatment codes not aligned with outcomes");
    if (w_.size() != y_.size()) throw std::invalid_argument("objective: weights not aligned with outcomes");
    if (is_augmented(kind_) && a0_.size() != y_.size())
      throw std::invalid_argument("objective: augmentation vector not aligned with outcomes");
  }

  LossKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return y_.size(); }

  double aug(std::size_t i) const noexcept { return a0_.empty() ? 0.0 : a0_[i]; }

  GradHess grad_hess(std::size_t i, double pred) const noexcept {
    switch (kind_) {
      case LossKind::stage1_mse: return grad_hess_stage1_continuous(y_[i], pred, w_[i]);
      case LossKind::stage1_logistic: return grad_hess_stage1_binary(y_[i], pred, w_[i]);
      case LossKind::stage2_meandiff:
      case LossKind::stage2_meandiff_noaug: return grad_hess_stage2_continuous(y_[i], aug(i), pred, t_[i], w_[i]);
      case LossKind::stage2_riskratio:
      case LossKind::stage2_riskratio_noaug: return grad_hess_stage2_binary(y_[i], aug(i), pred, t_[i], w_[i]);
    }
    return {0.0, 0.0};
  }

  double loss(std::size_t i, double pred) const noexcept {
    switch (kind_) {
      case LossKind::stage1_mse: return loss_stage1_continuous(y_[i], pred, w_[i]);
      case LossKind::stage1_logistic: return loss_stage1_binary(y_[i], pred, w_[i]);
      case LossKind::stage2_meandiff:
      case LossKind::stage2_meandiff_noaug: return loss_stage2_continuous(y_[i], aug(i), pred, t_[i], w_[i]);
      case LossKind::stage2_riskratio:
      case LossKind::stage2_riskratio_noaug: return loss_stage2_binary(y_[i], aug(i), pred, t_[i], w_[i]);
    }
    return 0.0;
  }

  /// Constant prediction minimizing the summed loss over `rows`.
  double constant_minimizer(std::span<const std::size_t> rows) const {
    switch (kind_) {
      case LossKind::stage1_mse: {
        double sw = 0.0, swy = 0.0;
        for (auto i : rows) sw += w_[i], swy += w_[i] * y_[i];
        return sw > 0.0 ? swy / sw : 0.0;
      }
      case LossKind::stage1_logistic: {
        double sw = 0.0, swy = 0.0;
        for (auto i : rows) sw += w_[i], swy += w_[i] * y_[i];
        double m = std::clamp(sw > 0.0 ? swy / sw : 0.5, 1e-6, 1.0 - 1e-6);
        return logit(m);
      }
      case LossKind::stage2_meandiff:
      case LossKind::stage2_meandiff_noaug: {
        double sw = 0.0, s = 0.0;
        for (auto i : rows) sw += w_[i], s += w_[i] * t_[i] * (y_[i] - aug(i));
        return sw > 0.0 ? s / sw : 0.0;
      }
      case LossKind::stage2_riskratio:
      case LossKind::stage2_riskratio_noaug: {
        // Stationarity: A - B1 e^{-F} + B0 e^{F} = 0, a quadratic in u = e^F.
        double a = 0.0, b1 = 0.0, b0 = 0.0;
        for (auto i : rows) {
          a += w_[i] * (1.0 - y_[i] - aug(i)) * t_[i];
          (t_[i] == 1 ? b1 : b0) += w_[i] * y_[i];
        }
        double u = 0.0;
        if (b1 <= 0.0) return 0.0;
        if (b0 > 0.0) {
          double disc = std::sqrt(a * a + 4.0 * b0 * b1);
          u = a > 0.0 ? 2.0 * b1 / (a + disc) : (disc - a) / (2.0 * b0);
        } else if (a > 0.0) {
          u = b1 / a;
        }
        return u > 0.0 && std::isfinite(u) ? std::log(u) : 0.0;
      }
    }
    return 0.0;
  }

 private:
  LossKind kind_;
  std::span<const double> y_;
  std::span<const int> t_;
  std::span<const double> w_;
  std::span<const double> a0_;
};

/// Per-round loss of a boosting run and the round count it selected.
struct DiagnosticCurve {
  std::vector<double> loss;  ///< loss[r] after r trees (r = 0 is the base alone)
  std::size_t chosen_round = 0;
  bool cross_validated = false;  ///< held-out (true) or training (false) loss
};

struct FitResult {
  Ensemble ensemble;
  DiagnosticCurve curve;
  /// With cross-validation: each row's prediction from the fold model that
  /// held it out, after the chosen round count. NaN for rows not fitted;
  /// empty without cross-validation.
  std::vector<double> out_of_fold;
};

namespace detail {

/// One boosting run on a subset of rows, advanced a round at a time.
/// Predictions are maintained for every row of the matrix so held-out rows
/// can be scored after each round.
class BoostRun {
 public:
  BoostRun(const Objective& obj, const SortedColumns& cols, std::vector<std::size_t> train,
           const BoostParams& params, std::uint64_t stream)
      : obj_(&obj), cols_(&cols), train_(std::move(train)), params_(params), stream_(stream) {
    const std::size_t n = cols.rows();
    ensemble_.learning_rate = params.learning_rate;
    ensemble_.base = params.base == BaseInit::minimizer ? obj.constant_minimizer(train_) : 0.0;
    ensemble_.loss = std::string(to_string(obj.kind()));
    ensemble_.n_features = cols.cols();
    pred_.assign(n, ensemble_.base);
    g_.assign(n, 0.0);
    h_.assign(n, 0.0);
  }

  void step() {
    for (auto i : train_) {
      auto gh = obj_->grad_hess(i, pred_[i]);
      g_[i] = gh.g;
      h_[i] = gh.h;
    }
    Rng rng = substream(params_.seed, {stream_, ensemble_.trees.size()});
    auto tree = grow_tree(g_, h_, *cols_, train_, params_, rng);
    const Matrix& x = cols_->matrix();
    for (std::size_t i = 0; i < pred_.size(); ++i) pred_[i] += params_.learning_rate * tree.predict(x.row(i));
    ensemble_.trees.push_back(std::move(tree));
  }

  double mean_loss(std::span<const std::size_t> rows) const {
    double s = 0.0;
    for (auto i : rows) s += obj_->loss(i, pred_[i]);
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  }

  std::size_t rounds() const noexcept { return ensemble_.trees.size(); }
  const std::vector<std::size_t>& train_rows() const noexcept { return train_; }
  const Ensemble& ensemble() const noexcept { return ensemble_; }
  Ensemble take_ensemble() { return std::move(ensemble_); }

 private:
  const Objective* obj_;
  const SortedColumns* cols_;
  std::vector<std::size_t> train_;
  BoostParams params_;
  std::uint64_t stream_;
  Ensemble ensemble_;
  std::vector<double> pred_, g_, h_;
};

constexpr std::uint64_t kFoldAssignStream = 0xF01D;

}  // namespace detail

/// Assigns rows to k folds, shuffling within each stratum and dealing rows
/// round-robin so every fold receives a share of every stratum.
inline std::vector<std::size_t> stratified_folds(std::span<const int> strata, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> fold(strata.size(), 0);
  std::vector<int> labels(strata.begin(), strata.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  Rng rng = substream(seed, {detail::kFoldAssignStream});
  std::size_t offset = 0;
  for (int label : labels) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < strata.size(); ++i)
      if (strata[i] == label) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < members.size(); ++j) fold[members[j]] = (offset + j) % k;
    offset = (offset + members.size()) % k;
  }
  return fold;
}

/// Boosts `params.n_rounds` trees on `rows` of x, or, when params.cv_folds
/// > 0, selects the round count by k-fold cross-validated early stopping and
/// refits on all rows with it. `strata` (one label per row) guides fold
/// assignment; empty means unstratified.
inline FitResult fit_boosted(const Objective& obj, const Matrix& x, const BoostParams& params,
                             std::span<const int> strata = {}, std::size_t threads = 1,
                             std::vector<std::size_t> rows = {}) {
  params.validate();
  if (x.rows() != obj.size()) throw std::invalid_argument("fit_boosted: covariates not aligned with outcomes");
  if (rows.empty()) {
    rows.resize(x.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  SortedColumns cols(x);
  FitResult result;

  std::size_t rounds = params.n_rounds;
  if (params.cv_folds > 0) {
    std::vector<int> labels(rows.size(), 0);
    if (!strata.empty()) {
      if (strata.size() != x.rows()) throw std::invalid_argument("fit_boosted: strata not aligned with rows");
      for (std::size_t k = 0; k < rows.size(); ++k) labels[k] = strata[rows[k]];
    }
    const std::size_t k = std::min(params.cv_folds, rows.size());
    if (k < 2) throw std::invalid_argument("fit_boosted: too few rows for cross-validation");
    auto fold_of = stratified_folds(labels, k, params.seed);

    std::vector<std::vector<std::size_t>> held(k);
    std::vector<detail::BoostRun> runs;
    runs.reserve(k);
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<std::size_t> train;
      for (std::size_t j = 0; j < rows.size(); ++j) (fold_of[j] == f ? held[f] : train).push_back(rows[j]);
      runs.emplace_back(obj, cols, std::move(train), params, f + 1);
    }
    // fold_losses[f][r]: mean held-out loss of fold f after r rounds
    std::vector<std::vector<double>> fold_losses(k);
    for (std::size_t f = 0; f < k; ++f) fold_losses[f].push_back(runs[f].mean_loss(held[f]));

    auto& curve = result.curve.loss;
    curve.push_back(0.0);
    for (std::size_t f = 0; f < k; ++f) curve[0] += fold_losses[f][0] / static_cast<double>(k);
    std::size_t best = 0;
    std::size_t done = 0;
    while (done < params.n_rounds && done - best < params.patience) {
      const std::size_t chunk = std::min(params.patience, params.n_rounds - done);
      parallel_for(k, threads, [&](std::size_t f) {
        for (std::size_t r = 0; r < chunk; ++r) {
          runs[f].step();
          fold_losses[f].push_back(runs[f].mean_loss(held[f]));
        }
      });
      for (std::size_t r = done + 1; r <= done + chunk; ++r) {
        double m = 0.0;
        for (std::size_t f = 0; f < k; ++f) m += fold_losses[f][r] / static_cast<double>(k);
        curve.push_back(m);
        if (m < curve[best]) best = r;
      }
      done += chunk;
    }
    if (params.cv_rule == CvRule::one_se) {
      // Per-fold paired differences against the best round remove the
      // fold-to-fold level differences from the standard error.
      auto within_one_se = [&](std::size_t r) {
        double mean = 0.0, ss = 0.0;
        for (std::size_t f = 0; f < k; ++f) mean += fold_losses[f][r] - fold_losses[f][best];
        mean /= static_cast<double>(k);
        for (std::size_t f = 0; f < k; ++f) {
          double d = fold_losses[f][r] - fold_losses[f][best] - mean;
          ss += d * d;
        }
        return mean <= std::sqrt(ss / static_cast<double>(k - 1) / static_cast<double>(k));
      };
      std::size_t r = 0;
      while (r < best && !within_one_se(r)) ++r;
      best = r;
    }
    rounds = best;
    result.out_of_fold.assign(x.rows(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t f = 0; f < k; ++f) {
      const Ensemble& e = runs[f].ensemble();
      std::span<const RegressionTree> first(e.trees.data(), best);
      for (auto i : held[f]) result.out_of_fold[i] = predict_ensemble(first, e.learning_rate, e.base, x.row(i));
    }
    result.curve.chosen_round = best;
    result.curve.cross_validated = true;
  }

  detail::BoostRun full(obj, cols, rows, params, 0);
  const bool record = params.cv_folds == 0;
  if (record) result.curve.loss.push_back(full.mean_loss(rows));
  for (std::size_t r = 0; r < rounds; ++r) {
    full.step();
    if (record) result.curve.loss.push_back(full.mean_loss(rows));
  }
  if (record) result.curve.chosen_round = rounds;
  result.ensemble = full.take_ensemble();
  return result;
}

}  // namespace tsgbt
