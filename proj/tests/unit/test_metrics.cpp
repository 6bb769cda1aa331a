#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <tsgbt/metrics.hpp>
#include <tsgbt/rng.hpp>

using namespace tsgbt;
using Catch::Approx;

namespace {

RegressionTree stump(int feature, double gain, std::size_t p) {
  RegressionTree t;
  t.n_features = p;
  TreeNode root;
  root.feature = feature;
  root.threshold = 0.0;
  root.left = 1;
  root.right = 2;
  root.gain = gain;
  t.nodes = {root, TreeNode{}, TreeNode{}};
  return t;
}

}  // namespace

TEST_CASE("spearman correlation", "[metrics]") {
  std::vector<double> a{1, 2, 3}, b{1, 3, 2}, r{3, 2, 1}, c{5, 5, 5};
  CHECK(*spearman(a, a) == Approx(1.0));
  CHECK(*spearman(a, r) == Approx(-1.0));
  CHECK(*spearman(a, b) == Approx(0.5));
  CHECK_FALSE(spearman(a, c).has_value());
  std::vector<double> ties{1, 1, 2, 3}, other{1, 2, 3, 4};
  auto ranks = average_ranks(ties);
  CHECK(ranks == std::vector<double>{1.5, 1.5, 3, 4});
  CHECK(spearman(ties, other).has_value());
}

TEST_CASE("spearman is invariant to monotone transforms", "[metrics]") {
  Rng rng(12);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 50; ++k) {
    std::vector<double> a(30), b(30), fa(30);
    for (std::size_t i = 0; i < 30; ++i) {
      a[i] = nd(rng);
      b[i] = a[i] + nd(rng);
      fa[i] = std::exp(3 * a[i]) + 7;
    }
    CHECK(*spearman(a, b) == Approx(*spearman(fa, b)).margin(1e-12));
  }
}

TEST_CASE("scale-appropriate mean squared error", "[metrics]") {
  std::vector<double> e{1, 2}, t{2, 1};
  CHECK(mse_scale(e, t, Estimand::meandiff) == Approx(1.0));
  std::vector<double> rr{2.0}, one{1.0};
  CHECK(mse_scale(rr, one, Estimand::riskratio) == Approx(std::log(2.0) * std::log(2.0)));
  CHECK(mse_scale(rr, one, Estimand::riskratio) == Approx(mse_scale(one, rr, Estimand::riskratio)));
  std::vector<double> neg{-1.0};
  CHECK_THROWS_AS(mse_scale(neg, one, Estimand::riskratio), std::invalid_argument);
  CHECK_THROWS_AS(mse_scale(e, one, Estimand::meandiff), std::invalid_argument);
}

TEST_CASE("variable importance", "[metrics]") {
  Ensemble only3;
  only3.n_features = 5;
  only3.trees = {stump(3, 2.0, 5), stump(3, 5.0, 5)};
  auto rep = variable_importance(only3);
  REQUIRE(rep.entries.size() == 5);
  CHECK(rep.entries[0].feature == 3);
  CHECK(rep.entries[0].relative == 100.0);
  CHECK(rep.entries[0].name == "x4");
  for (std::size_t k = 1; k < 5; ++k) CHECK(rep.entries[k].relative == 0.0);

  Ensemble two;
  two.n_features = 2;
  two.feature_names = {"age", "dose"};
  two.trees = {stump(1, 4.0, 2), stump(0, 2.0, 2)};
  auto r2 = variable_importance(two);
  CHECK(r2.entries[0].name == "dose");
  CHECK(r2.entries[0].relative == 100.0);
  CHECK(r2.entries[1].relative == Approx(50.0));
  CHECK(r2.entries[0].raw_gain + r2.entries[1].raw_gain == Approx(6.0));

  CHECK(variable_importance(Ensemble{}).entries.empty());
}
