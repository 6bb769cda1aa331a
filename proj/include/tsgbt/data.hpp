#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "csv.hpp"
#include "matrix.hpp"

namespace tsgbt {

enum class OutcomeKind { continuous, binary };

inline std::string_view to_string(OutcomeKind k) {
  return k == OutcomeKind::continuous ? "continuous" : "binary";
}

inline OutcomeKind outcome_kind_from_string(std::string_view s) {
  if (s == "continuous") return OutcomeKind::continuous;
  if (s == "binary") return OutcomeKind::binary;
  throw std::invalid_argument("unknown outcome kind '" + std::string(s) + "'");
}

/// Inverse randomization-probability factor of one sample.
struct RandWeight {
  double value;
};

/// w = (t+1)/(2p) - (t-1)/(2(1-p)), i.e. 1/p for treated and 1/(1-p) for controls.
inline RandWeight rand_weight(int t, double p_treat) {
  if (!(p_treat > 0.0 && p_treat < 1.0))
    throw std::invalid_argument("rand_weight: p_treat must lie in (0,1)");
  if (t != 1 && t != -1) throw std::invalid_argument("rand_weight: treatment code must be -1 or +1");
  return {(t + 1) / (2.0 * p_treat) - (t - 1) / (2.0 * (1.0 - p_treat))};
}

/// Outcomes, treatment codes in {-1,+1}, covariates, randomization
/// probability and per-sample sampling weights of a randomized trial.
///
/// Construct through TrialDataset::make, which validates every invariant;
/// the object is immutable afterwards.
class TrialDataset {
 public:
  static TrialDataset make(std::vector<double> y, std::vector<int> t, Matrix x, double p_treat,
                           OutcomeKind kind, std::vector<double> w_sample = {},
                           std::vector<std::string> feature_names = {}) {
    TrialDataset d;
    const std::size_t n = y.size();
    if (n == 0) throw std::invalid_argument("dataset is empty");
    if (t.size() != n || x.rows() != n)
      throw std::invalid_argument("dataset: y, t and x must have the same number of rows");
    if (!(p_treat > 0.0 && p_treat < 1.0))
      throw std::invalid_argument("dataset: p_treat must lie in (0,1)");
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] != 1 && t[i] != -1)
        throw std::invalid_argument("dataset: row " + std::to_string(i + 1) +
                                    ": treatment must be -1 or +1");
      if (!std::isfinite(y[i]))
        throw std::invalid_argument("dataset: row " + std::to_string(i + 1) + ": non-finite outcome");
      if (kind == OutcomeKind::binary && y[i] != 0.0 && y[i] != 1.0)
        throw std::invalid_argument("dataset: row " + std::to_string(i + 1) +
                                    ": binary outcome must be 0 or 1");
    }
    for (double v : x.data())
      if (!std::isfinite(v)) throw std::invalid_argument("dataset: covariates contain missing values");
    if (w_sample.empty()) w_sample.assign(n, 1.0);
    if (w_sample.size() != n) throw std::invalid_argument("dataset: weight vector length mismatch");
    for (std::size_t i = 0; i < n; ++i)
      if (!(w_sample[i] > 0.0) || !std::isfinite(w_sample[i]))
        throw std::invalid_argument("dataset: row " + std::to_string(i + 1) +
                                    ": sampling weight must be positive");
    if (feature_names.empty())
      for (std::size_t j = 0; j < x.cols(); ++j) feature_names.push_back("x" + std::to_string(j + 1));
    if (feature_names.size() != x.cols())
      throw std::invalid_argument("dataset: feature name count != covariate count");

    d.y_ = std::move(y);
    d.t_ = std::move(t);
    d.x_ = std::move(x);
    d.p_treat_ = p_treat;
    d.kind_ = kind;
    d.w_sample_ = std::move(w_sample);
    d.names_ = std::move(feature_names);
    d.w_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      d.w_[i] = rand_weight(d.t_[i], p_treat).value * d.w_sample_[i];
    return d;
  }

  std::size_t n() const noexcept { return y_.size(); }
  std::size_t p() const noexcept { return x_.cols(); }
  const std::vector<double>& y() const noexcept { return y_; }
  const std::vector<int>& t() const noexcept { return t_; }
  const Matrix& x() const noexcept { return x_; }
  double p_treat() const noexcept { return p_treat_; }
  OutcomeKind outcome_kind() const noexcept { return kind_; }
  const std::vector<double>& w_sample() const noexcept { return w_sample_; }
  const std::vector<std::string>& feature_names() const noexcept { return names_; }

  /// Randomization weight times sampling weight, per sample.
  const std::vector<double>& weights() const noexcept { return w_; }

  /// Same trial with the covariate matrix replaced (row count must match).
  TrialDataset with_covariates(Matrix x) const {
    return make(y_, t_, std::move(x), p_treat_, kind_, w_sample_, names_);
  }

  /// Subset of rows, in the given order.
  TrialDataset subset(const std::vector<std::size_t>& rows) const {
    std::vector<double> y, w;
    std::vector<int> t;
    Matrix x(rows.size(), p());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      y.push_back(y_[rows[k]]);
      t.push_back(t_[rows[k]]);
      w.push_back(w_sample_[rows[k]]);
      auto src = x_.row(rows[k]);
      std::copy(src.begin(), src.end(), x.row(k).begin());
    }
    return make(std::move(y), std::move(t), std::move(x), p_treat_, kind_, std::move(w), names_);
  }

 private:
  TrialDataset() = default;

  std::vector<double> y_;
  std::vector<int> t_;
  Matrix x_;
  double p_treat_ = 0.5;
  OutcomeKind kind_ = OutcomeKind::continuous;
  std::vector<double> w_sample_;
  std::vector<double> w_;
  std::vector<std::string> names_;
};

enum class TreatmentCoding { plus_minus_one, zero_one };

/// Column mapping for CSV ingestion.
struct CsvSchema {
  std::string outcome = "y";
  std::string treatment = "t";
  std::optional<std::string> weight;
  /// Empty means every column not otherwise used or excluded, in file order.
  std::vector<std::string> covariates;
  std::vector<std::string> exclude = {"true_tau"};
  TreatmentCoding coding = TreatmentCoding::plus_minus_one;
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  /// Empty means the observed fraction of treated rows.
  std::optional<double> p_treat;
};

namespace detail {

inline double cell_number(const csv::Table& table, std::size_t r, std::size_t c) {
  auto v = csv::parse_double(table.rows[r][c]);
  if (!v || !std::isfinite(*v))
    throw csv::ParseError("row " + std::to_string(r + 1) + ", column '" + table.header[c] +
                              "': non-numeric value '" + table.rows[r][c] + "'",
                          r + 1, table.header[c]);
  return *v;
}

inline std::size_t require_column(const csv::Table& table, const std::string& name) {
  auto idx = table.column_index(name);
  if (!idx) throw csv::ParseError("missing column '" + name + "'", 0, name);
  return *idx;
}

}  // namespace detail

/// Builds a validated dataset from a parsed table; errors name row and column.
inline TrialDataset dataset_from_table(const csv::Table& table, const CsvSchema& schema) {
  const std::size_t y_col = detail::require_column(table, schema.outcome);
  const std::size_t t_col = detail::require_column(table, schema.treatment);
  std::optional<std::size_t> w_col;
  if (schema.weight) w_col = detail::require_column(table, *schema.weight);

  std::vector<std::size_t> x_cols;
  std::vector<std::string> names;
  if (schema.covariates.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const auto& h = table.header[c];
      if (c == y_col || c == t_col || (w_col && c == *w_col)) continue;
      bool excluded = false;
      for (const auto& e : schema.exclude) excluded = excluded || (e == h);
      if (excluded) continue;
      x_cols.push_back(c);
      names.push_back(h);
    }
  } else {
    for (const auto& name : schema.covariates) {
      x_cols.push_back(detail::require_column(table, name));
      names.push_back(name);
    }
  }

  const std::size_t n = table.rows.size();
  if (n == 0) throw csv::ParseError("CSV has no data rows", 0, "");
  std::vector<double> y(n), w;
  std::vector<int> t(n);
  Matrix x(n, x_cols.size());
  std::size_t treated = 0;
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = detail::cell_number(table, r, y_col);
    if (schema.outcome_kind == OutcomeKind::binary && y[r] != 0.0 && y[r] != 1.0)
      throw csv::ParseError("row " + std::to_string(r + 1) + ", column '" + schema.outcome +
                                "': binary outcome must be 0 or 1",
                            r + 1, schema.outcome);
    double tv = detail::cell_number(table, r, t_col);
    int code = 0;
    if (schema.coding == TreatmentCoding::zero_one) {
      if (tv == 1.0) code = 1;
      else if (tv == 0.0) code = -1;
    } else {
      if (tv == 1.0) code = 1;
      else if (tv == -1.0) code = -1;
    }
    if (code == 0)
      throw csv::ParseError("row " + std::to_string(r + 1) + ", column '" + schema.treatment +
                                "': treatment value outside coding",
                            r + 1, schema.treatment);
    t[r] = code;
    treated += code == 1;
    for (std::size_t j = 0; j < x_cols.size(); ++j) x(r, j) = detail::cell_number(table, r, x_cols[j]);
    if (w_col) {
      double wv = detail::cell_number(table, r, *w_col);
      if (!(wv > 0.0))
        throw csv::ParseError("row " + std::to_string(r + 1) + ", column '" + *schema.weight +
                                  "': sampling weight must be positive",
                              r + 1, *schema.weight);
      w.push_back(wv);
    }
  }
  double p = schema.p_treat ? *schema.p_treat : static_cast<double>(treated) / static_cast<double>(n);
  return TrialDataset::make(std::move(y), std::move(t), std::move(x), p, schema.outcome_kind,
                            std::move(w), std::move(names));
}

inline TrialDataset load_csv(const std::string& path, const CsvSchema& schema) {
  return dataset_from_table(csv::read_file(path), schema);
}

}  // namespace tsgbt
