#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "matrix.hpp"
#include "rng.hpp"

namespace tsgbt {

/// How an ensemble's initial prediction is chosen.
enum class BaseInit {
  minimizer,  ///< constant minimizing the training loss
  zero,
};

/// How cross-validation turns the held-out curve into a round count.
enum class CvRule {
  min,     ///< first round attaining the minimum mean held-out loss
  one_se,  ///< fewest rounds within one fold standard error of the minimum
};

struct BoostParams {
  std::size_t n_rounds = 100;  ///< rounds, or the cap on rounds when cross-validating
  double learning_rate = 0.3;
  double gamma = 0.0;   ///< per-leaf complexity penalty
  double lambda = 1.0;  ///< leaf-weight L2 penalty
  std::size_t max_depth = 6;
  double min_child_weight = 1.0;  ///< minimum hessian sum per child
  double subsample = 1.0;
  double colsample = 1.0;
  std::uint64_t seed = 0;
  std::size_t cv_folds = 0;  ///< 0 disables cross-validated early stopping
  std::size_t patience = 20;
  CvRule cv_rule = CvRule::min;
  BaseInit base = BaseInit::minimizer;

  void validate() const {
    auto fail = [](const char* m) { throw std::invalid_argument(std::string("BoostParams: ") + m); };
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate must lie in (0,1]");
    if (!(gamma >= 0.0)) fail("gamma must be >= 0");
    if (!(lambda >= 0.0)) fail("lambda must be >= 0");
    if (max_depth == 0) fail("max_depth must be positive");
    if (!(min_child_weight >= 0.0)) fail("min_child_weight must be >= 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) fail("subsample must lie in (0,1]");
    if (!(colsample > 0.0 && colsample <= 1.0)) fail("colsample must lie in (0,1]");
    if (cv_folds == 1) fail("cv_folds must be 0 or >= 2");
    if (cv_folds > 0 && patience == 0) fail("patience must be positive");
  }
};

struct TreeNode {
  int feature = -1;  ///< -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;  ///< leaf value
  double gain = 0.0;    ///< loss reduction of the split, net of gamma
  double cover = 0.0;   ///< hessian sum of the samples that reached the node

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Axis-aligned binary tree; x goes left when x[feature] < threshold.
struct RegressionTree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root
  std::size_t n_features = 0;

  std::size_t n_leaves() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [id, d] = stack.back();
      stack.pop_back();
      const auto& nd = nodes[static_cast<std::size_t>(id)];
      if (nd.is_leaf()) {
        best = std::max(best, d);
      } else {
        stack.emplace_back(nd.left, d + 1);
        stack.emplace_back(nd.right, d + 1);
      }
    }
    return best;
  }

  /// Index of the leaf x_row falls into, i.e. q(x).
  std::size_t leaf_index(std::span<const double> x_row) const {
    if (x_row.size() != n_features)
      throw std::invalid_argument("predict: expected " + std::to_string(n_features) +
                                  " covariates, got " + std::to_string(x_row.size()));
    std::size_t id = 0;
    while (!nodes[id].is_leaf()) {
      const auto& nd = nodes[id];
      id = static_cast<std::size_t>(x_row[static_cast<std::size_t>(nd.feature)] < nd.threshold
                                        ? nd.left
                                        : nd.right);
    }
    return id;
  }

  double predict(std::span<const double> x_row) const { return nodes[leaf_index(x_row)].weight; }

  bool operator==(const RegressionTree&) const = default;
};

inline double predict_tree(const RegressionTree& tree, std::span<const double> x_row) {
  return tree.predict(x_row);
}

/// Per-feature row orderings of a covariate matrix, computed once and shared
/// by every tree grown on it.
class SortedColumns {
 public:
  struct Entry {
    std::uint32_t row;
    double value;
  };

  explicit SortedColumns(const Matrix& x) : x_(&x), columns_(x.cols()) {
    for (std::size_t f = 0; f < x.cols(); ++f) {
      auto& col = columns_[f];
      col.resize(x.rows());
      for (std::size_t i = 0; i < x.rows(); ++i) col[i] = {static_cast<std::uint32_t>(i), x(i, f)};
      std::stable_sort(col.begin(), col.end(),
                       [](const Entry& a, const Entry& b) { return a.value < b.value; });
    }
  }

  const Matrix& matrix() const noexcept { return *x_; }
  std::size_t rows() const noexcept { return x_->rows(); }
  std::size_t cols() const noexcept { return x_->cols(); }
  const std::vector<Entry>& column(std::size_t f) const noexcept { return columns_[f]; }

 private:
  const Matrix* x_;
  std::vector<std::vector<Entry>> columns_;
};

/// Minimizer of G*w + H*w^2/2 + lambda*w^2/2.
inline double leaf_weight(double g_sum, double h_sum, double lambda) noexcept {
  double denom = h_sum + lambda;
  return denom > 0.0 ? -g_sum / denom : 0.0;
}

/// Reduction in the penalized second-order objective from splitting a node
/// with sums (G,H) into (G_L,H_L) and (G-G_L,H-H_L).
inline double split_gain(double gl, double hl, double g, double h, double lambda, double gamma) noexcept {
  double gr = g - gl, hr = h - hl;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

/// Grows one tree on `rows` (a subset of the rows of cols.matrix()) by exact
/// greedy depth-wise split search on the gradients g and hessians h, which
/// are indexed by matrix row.
inline RegressionTree grow_tree(std::span<const double> g, std::span<const double> h,
                                const SortedColumns& cols, std::span<const std::size_t> rows,
                                const BoostParams& params, Rng& rng) {
  const std::size_t n_total = cols.rows();
  if (rows.empty() || n_total == 0) throw std::invalid_argument("grow_tree: empty input");
  if (g.size() != n_total || h.size() != n_total)
    throw std::invalid_argument("grow_tree: gradient/hessian length != row count");
  for (std::size_t i : rows)
    if (!(h[i] >= 0.0)) throw std::invalid_argument("grow_tree: negative hessian");

  std::vector<std::size_t> sample;
  if (params.subsample < 1.0) {
    auto k = static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(rows.size())));
    k = std::clamp<std::size_t>(k, 1, rows.size());
    sample.reserve(k);
    std::sample(rows.begin(), rows.end(), std::back_inserter(sample), k, rng);
  } else {
    sample.assign(rows.begin(), rows.end());
  }

  std::vector<std::size_t> features(cols.cols());
  std::iota(features.begin(), features.end(), std::size_t{0});
  if (params.colsample < 1.0 && !features.empty()) {
    auto k = static_cast<std::size_t>(std::llround(params.colsample * static_cast<double>(features.size())));
    k = std::clamp<std::size_t>(k, 1, features.size());
    std::vector<std::size_t> chosen;
    chosen.reserve(k);
    std::sample(features.begin(), features.end(), std::back_inserter(chosen), k, rng);
    features = std::move(chosen);
  }

  RegressionTree tree;
  tree.n_features = cols.cols();
  std::vector<double> node_g{0.0}, node_h{0.0};
  std::vector<int> pos(n_total, -1);
  for (std::size_t i : sample) {
    pos[i] = 0;
    node_g[0] += g[i];
    node_h[0] += h[i];
  }
  tree.nodes.push_back({});
  tree.nodes[0].cover = node_h[0];

  struct Best {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    double gl = 0.0, hl = 0.0;
  };

  std::vector<std::size_t> frontier{0};
  const Matrix& x = cols.matrix();
  for (std::size_t depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
    const std::size_t n_slots = frontier.size();
    std::vector<Best> best(n_slots);
    std::vector<double> gl(n_slots), hl(n_slots), last(n_slots);
    std::vector<char> seen(n_slots);

    for (std::size_t f : features) {
      std::fill(gl.begin(), gl.end(), 0.0);
      std::fill(hl.begin(), hl.end(), 0.0);
      std::fill(seen.begin(), seen.end(), 0);
      for (const auto& e : cols.column(f)) {
        int s = pos[e.row];
        if (s < 0) continue;
        auto slot = static_cast<std::size_t>(s);
        if (seen[slot] && e.value > last[slot]) {
          const std::size_t node = frontier[slot];
          const double G = node_g[node], H = node_h[node];
          const double hr = H - hl[slot];
          if (hl[slot] >= params.min_child_weight && hr >= params.min_child_weight &&
              hl[slot] + params.lambda > 0.0 && hr + params.lambda > 0.0) {
            double gain = split_gain(gl[slot], hl[slot], G, H, params.lambda, params.gamma);
            if (gain > best[slot].gain) {
              double thr = 0.5 * last[slot] + 0.5 * e.value;
              if (!(thr > last[slot])) thr = e.value;
              best[slot] = {gain, static_cast<int>(f), thr, gl[slot], hl[slot]};
            }
          }
        }
        gl[slot] += g[e.row];
        hl[slot] += h[e.row];
        last[slot] = e.value;
        seen[slot] = 1;
      }
    }

    std::vector<std::size_t> next;
    std::vector<int> child_slot(n_slots, -1);
    for (std::size_t s = 0; s < n_slots; ++s) {
      const std::size_t node = frontier[s];
      if (best[s].feature < 0) {
        tree.nodes[node].weight = leaf_weight(node_g[node], node_h[node], params.lambda);
        continue;
      }
      const auto left = tree.nodes.size();
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      node_g.push_back(best[s].gl);
      node_h.push_back(best[s].hl);
      node_g.push_back(node_g[node] - best[s].gl);
      node_h.push_back(node_h[node] - best[s].hl);
      tree.nodes[left].cover = node_h[left];
      tree.nodes[left + 1].cover = node_h[left + 1];
      auto& nd = tree.nodes[node];
      nd.feature = best[s].feature;
      nd.threshold = best[s].threshold;
      nd.left = static_cast<int>(left);
      nd.right = static_cast<int>(left + 1);
      nd.gain = best[s].gain;
      child_slot[s] = static_cast<int>(next.size());
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (std::size_t i : sample) {
      if (pos[i] < 0) continue;
      auto s = static_cast<std::size_t>(pos[i]);
      if (child_slot[s] < 0) {
        pos[i] = -1;
        continue;
      }
      const auto& nd = tree.nodes[frontier[s]];
      bool go_left = x(i, static_cast<std::size_t>(nd.feature)) < nd.threshold;
      pos[i] = child_slot[s] + (go_left ? 0 : 1);
    }
    frontier = std::move(next);
  }
  for (std::size_t node : frontier)
    tree.nodes[node].weight = leaf_weight(node_g[node], node_h[node], params.lambda);
  return tree;
}

/// Convenience overload growing on every row of x.
inline RegressionTree grow_tree(std::span<const double> g, std::span<const double> h, const Matrix& x,
                                const BoostParams& params, Rng& rng) {
  if (x.rows() == 0) throw std::invalid_argument("grow_tree: empty input");
  SortedColumns cols(x);
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return grow_tree(g, h, cols, rows, params, rng);
}

/// Additive tree ensemble: base + learning_rate * sum of tree outputs.
struct Ensemble {
  std::vector<RegressionTree> trees;
  double learning_rate = 1.0;
  double base = 0.0;
  std::string loss;
  std::size_t n_features = 0;
  std::vector<std::string> feature_names;

  double predict(std::span<const double> x_row) const {
    if (x_row.size() != n_features)
      throw std::invalid_argument("predict: expected " + std::to_string(n_features) +
                                  " covariates, got " + std::to_string(x_row.size()));
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x_row);
    return base + learning_rate * sum;
  }

  std::vector<double> predict(const Matrix& x) const {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
    return out;
  }

  bool operator==(const Ensemble&) const = default;
};

inline double predict_ensemble(std::span<const RegressionTree> trees, double learning_rate, double base,
                               std::span<const double> x_row) {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x_row);
  return base + learning_rate * sum;
}

}  // namespace tsgbt
