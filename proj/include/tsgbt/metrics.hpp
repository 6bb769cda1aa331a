#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "losses.hpp"
#include "tree.hpp"

namespace tsgbt {

/// 1-based ranks; tied values share their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Spearman rank correlation; empty when either input is constant.
inline std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("spearman: need at least two values");
  auto ra = average_ranks(a);
  auto rb = average_ranks(b);
  return pearson(ra, rb);
}

/// Mean squared error on the effect's natural scale: raw differences for
/// mean differences, log ratios for risk ratios.
inline double mse_scale(std::span<const double> est, std::span<const double> truth, Estimand estimand) {
  if (est.size() != truth.size()) throw std::invalid_argument("mse_scale: length mismatch");
  if (est.empty()) throw std::invalid_argument("mse_scale: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    double d;
    if (estimand == Estimand::riskratio) {
      if (!(est[i] > 0.0) || !(truth[i] > 0.0)) throw std::invalid_argument("mse_scale: risk ratios must be positive");
      d = std::log(est[i]) - std::log(truth[i]);
    } else {
      d = est[i] - truth[i];
    }
    s += d * d;
  }
  return s / static_cast<double>(est.size());
}

struct ImportanceEntry {
  std::size_t feature;
  std::string name;
  double raw_gain;
  double relative;  ///< percent of the largest raw gain
};

/// Features sorted by descending total split gain.
struct ImportanceReport {
  std::vector<ImportanceEntry> entries;
};

/// Sums every split's gain by feature over the ensemble and scales so the
/// top feature is 100.
inline ImportanceReport variable_importance(const Ensemble& model) {
  ImportanceReport rep;
  if (model.trees.empty()) return rep;
  std::vector<double> gain(model.n_features, 0.0);
  for (const auto& tree : model.trees)
    for (const auto& nd : tree.nodes)
      if (!nd.is_leaf()) gain[static_cast<std::size_t>(nd.feature)] += nd.gain;
  double top = gain.empty() ? 0.0 : *std::max_element(gain.begin(), gain.end());
  for (std::size_t f = 0; f < gain.size(); ++f) {
    std::string name = f < model.feature_names.size() ? model.feature_names[f] : "x" + std::to_string(f + 1);
    rep.entries.push_back({f, std::move(name), gain[f], top > 0.0 ? 100.0 * gain[f] / top : 0.0});
  }
  std::stable_sort(rep.entries.begin(), rep.entries.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.raw_gain > b.raw_gain; });
  return rep;
}

}  // namespace tsgbt
