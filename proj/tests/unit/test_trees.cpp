#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <tsgbt/rng.hpp>
#include <tsgbt/tree.hpp>

using namespace tsgbt;
using Catch::Approx;

namespace {

BoostParams plain(double lambda = 0.0, double gamma = 0.0) {
  BoostParams p;
  p.lambda = lambda;
  p.gamma = gamma;
  p.min_child_weight = 0.0;
  return p;
}

/// Penalized second-order objective of a tree on its training rows:
/// sum over leaves of (G w + (H + lambda) w^2 / 2) + gamma * leaves.
double tree_objective(const RegressionTree& tree, const std::vector<double>& g, const std::vector<double>& h,
                      const Matrix& x, double lambda, double gamma) {
  std::vector<double> gs(tree.nodes.size(), 0.0), hs(tree.nodes.size(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto leaf = tree.leaf_index(x.row(i));
    gs[leaf] += g[i];
    hs[leaf] += h[i];
  }
  double obj = 0.0;
  for (std::size_t j = 0; j < tree.nodes.size(); ++j) {
    if (!tree.nodes[j].is_leaf()) continue;
    double w = tree.nodes[j].weight;
    obj += gs[j] * w + 0.5 * (hs[j] + lambda) * w * w + gamma;
  }
  return obj;
}

struct RandomProblem {
  Matrix x;
  std::vector<double> g, h;
};

RandomProblem random_problem(Rng& rng, std::size_t n, std::size_t p) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.1, 2.0);
  RandomProblem r{Matrix(n, p), std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) r.x(i, j) = std::round(nd(rng) * 4.0) / 4.0;
    r.g[i] = nd(rng) + r.x(i, 0);
    r.h[i] = ud(rng);
  }
  return r;
}

}  // namespace

TEST_CASE("single leaf weight", "[trees]") {
  Matrix x(1, 1, 0.0);
  Rng rng(0);
  auto tree = grow_tree(std::vector<double>{-4.0}, std::vector<double>{8.0}, x, plain(1.0), rng);
  REQUIRE(tree.n_leaves() == 1);
  CHECK(tree.nodes[0].weight == Approx(4.0 / 9.0));
  CHECK(leaf_weight(-4.0, 8.0, 1.0) == Approx(4.0 / 9.0));
}

TEST_CASE("symmetric samples give one leaf", "[trees]") {
  Matrix x(2, 1, 1.0);
  Rng rng(0);
  auto tree = grow_tree(std::vector<double>{-2.0, -2.0}, std::vector<double>{4.0, 4.0}, x, plain(), rng);
  REQUIRE(tree.n_leaves() == 1);
  CHECK(tree.nodes[0].weight == Approx(0.5));
}

TEST_CASE("four-sample split", "[trees]") {
  Matrix x(4, 1, std::vector<double>{0, 0, 1, 1});
  std::vector<double> g{-1, -1, 1, 1}, h{1, 1, 1, 1};
  Rng rng(0);
  auto tree = grow_tree(g, h, x, plain(), rng);
  REQUIRE(tree.n_leaves() == 2);
  const auto& root = tree.nodes[0];
  CHECK(root.feature == 0);
  CHECK(root.threshold == Approx(0.5));
  CHECK(root.gain == Approx(2.0));
  CHECK(split_gain(-2, 2, 0, 4, 0, 0) == Approx(2.0));

  std::vector<double> zero{0.0}, one{1.0};
  CHECK(predict_tree(tree, zero) == Approx(1.0));
  CHECK(predict_tree(tree, one) == Approx(-1.0));

  std::vector<RegressionTree> trees{tree};
  CHECK(predict_ensemble(trees, 1.0, 0.2, one) == Approx(-0.8));
}

TEST_CASE("ensemble prediction arithmetic", "[trees]") {
  std::vector<double> any{3.0};
  CHECK(predict_ensemble({}, 0.1, 0.0, any) == 0.0);
  RegressionTree a, b;
  a.n_features = b.n_features = 1;
  a.nodes = {TreeNode{}};
  b.nodes = {TreeNode{}};
  a.nodes[0].weight = 0.5;
  b.nodes[0].weight = 0.3;
  CHECK(predict_tree(a, any) == 0.5);
  std::vector<RegressionTree> trees{a, b};
  CHECK(predict_ensemble(trees, 0.1, 0.0, any) == Approx(0.08));

  Ensemble e;
  e.trees = trees;
  e.learning_rate = 0.1;
  e.n_features = 1;
  CHECK(e.predict(any) == Approx(0.08));
  std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(e.predict(wrong), std::invalid_argument);
  CHECK_THROWS_AS(predict_tree(a, wrong), std::invalid_argument);
}

TEST_CASE("grow_tree input errors", "[trees]") {
  Rng rng(0);
  Matrix empty(0, 1);
  CHECK_THROWS_AS(grow_tree(std::vector<double>{}, std::vector<double>{}, empty, plain(), rng), std::invalid_argument);
  Matrix x(2, 1, 0.0);
  CHECK_THROWS_AS(grow_tree(std::vector<double>{1, 1}, std::vector<double>{1, -1}, x, plain(), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(grow_tree(std::vector<double>{1}, std::vector<double>{1}, x, plain(), rng), std::invalid_argument);
}

TEST_CASE("gain ties go to the lower feature index", "[trees]") {
  Matrix x(4, 2, std::vector<double>{0, 0, 0, 0, 1, 1, 1, 1});
  std::vector<double> g{-1, -1, 1, 1}, h{1, 1, 1, 1};
  Rng rng(0);
  auto tree = grow_tree(g, h, x, plain(), rng);
  CHECK(tree.nodes[0].feature == 0);
}

TEST_CASE("min_child_weight and gamma reject splits", "[trees]") {
  Matrix x(4, 1, std::vector<double>{0, 0, 1, 1});
  std::vector<double> g{-1, -1, 1, 1}, h{1, 1, 1, 1};
  Rng rng(0);
  auto p = plain();
  p.min_child_weight = 2.5;
  CHECK(grow_tree(g, h, x, p, rng).n_leaves() == 1);
  p = plain(0.0, 2.0);  // gain exactly 0 after the penalty
  CHECK(grow_tree(g, h, x, p, rng).n_leaves() == 1);
  p = plain(0.0, 1.999);
  CHECK(grow_tree(g, h, x, p, rng).n_leaves() == 2);
}

TEST_CASE("leaf weights are optimal for their leaf objective", "[trees]") {
  Rng rng(11);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 5.0);
  for (int k = 0; k < 500; ++k) {
    double G = nd(rng) * 3.0, H = ud(rng), lambda = ud(rng) * 0.5 + 0.01;
    double w = leaf_weight(G, H, lambda);
    auto obj = [&](double v) { return G * v + 0.5 * (H + lambda) * v * v; };
    CHECK(obj(w + 1e-3) > obj(w));
    CHECK(obj(w - 1e-3) > obj(w));
  }
}

TEST_CASE("split gain equals the objective decrease", "[trees]") {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    auto prob = random_problem(rng, 40, 3);
    auto params = plain(1.0, 0.3);
    params.max_depth = 1;
    Rng r2(k);
    auto stump = grow_tree(prob.g, prob.h, prob.x, params, r2);
    if (stump.n_leaves() != 2) continue;
    RegressionTree root;
    root.n_features = 3;
    root.nodes = {TreeNode{}};
    double G = 0, H = 0;
    for (std::size_t i = 0; i < 40; ++i) G += prob.g[i], H += prob.h[i];
    root.nodes[0].weight = leaf_weight(G, H, 1.0);
    double before = tree_objective(root, prob.g, prob.h, prob.x, 1.0, 0.3);
    double after = tree_objective(stump, prob.g, prob.h, prob.x, 1.0, 0.3);
    CHECK(before - after == Approx(stump.nodes[0].gain).epsilon(1e-10));
  }
}

TEST_CASE("tree structure invariants", "[trees]") {
  Rng rng(8);
  for (int k = 0; k < 30; ++k) {
    auto prob = random_problem(rng, 80, 4);
    auto params = plain(1.0);
    params.max_depth = 1 + static_cast<std::size_t>(k % 4);
    params.subsample = 0.7;
    params.colsample = 0.5;
    Rng r2(k);
    auto tree = grow_tree(prob.g, prob.h, prob.x, params, r2);
    CHECK(tree.depth() <= params.max_depth);
    std::size_t leaves = 0;
    for (const auto& n : tree.nodes) leaves += n.is_leaf();
    CHECK(tree.n_leaves() == leaves);
    for (std::size_t i = 0; i < 80; ++i) CHECK(tree.nodes[tree.leaf_index(prob.x.row(i))].is_leaf());
  }
}

TEST_CASE("identical inputs and seed give identical trees", "[trees]") {
  Rng rng(2);
  auto prob = random_problem(rng, 120, 6);
  auto params = plain(1.0);
  params.subsample = 0.6;
  params.colsample = 0.5;
  Rng a(77), b(77);
  CHECK(grow_tree(prob.g, prob.h, prob.x, params, a) == grow_tree(prob.g, prob.h, prob.x, params, b));
}
