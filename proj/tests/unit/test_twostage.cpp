#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <tsgbt/twostage.hpp>

using namespace tsgbt;
using Catch::Approx;

namespace {

BoostParams exact_params(std::size_t rounds) {
  BoostParams p;
  p.n_rounds = rounds;
  p.learning_rate = 1.0;
  p.gamma = 0.0;
  p.lambda = 0.0;
  p.min_child_weight = 0.0;
  p.max_depth = 1;
  return p;
}

/// Balanced two-cell continuous trial without noise: y = mu + t tau / 2.
TrialDataset two_cell_continuous(std::size_t n, double tau0, double tau1) {
  std::vector<double> y(n), xv(n);
  std::vector<int> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cell = static_cast<int>(i % 2);
    t[i] = (i / 2) % 2 ? 1 : -1;
    xv[i] = cell;
    const double mu = cell ? -1.0 : 2.0;
    y[i] = mu + t[i] * 0.5 * (cell ? tau1 : tau0);
  }
  return TrialDataset::make(y, t, Matrix(n, 1, xv), 0.5, OutcomeKind::continuous);
}

/// Two-cell binary trial with exact event counts; risk[cell][arm], arm 1 treated.
TrialDataset two_cell_binary(int per_arm, const double risk[2][2]) {
  std::vector<double> y, xv;
  std::vector<int> t;
  for (int cell = 0; cell < 2; ++cell)
    for (int arm = 0; arm < 2; ++arm) {
      const int events = static_cast<int>(std::lround(risk[cell][arm] * per_arm));
      for (int i = 0; i < per_arm; ++i) {
        y.push_back(i < events ? 1.0 : 0.0);
        t.push_back(arm ? 1 : -1);
        xv.push_back(cell);
      }
    }
  return TrialDataset::make(y, t, Matrix(y.size(), 1, xv), 0.5, OutcomeKind::binary);
}

double hte_at(const TwoStageModel& m, double x) {
  std::vector<double> row{x};
  return predict_hte(m, row);
}

double hte_at(const SeparateModel& m, double x) {
  std::vector<double> row{x};
  return predict_hte(m, row);
}

}  // namespace

TEST_CASE("stage 2 recovers two-cell mean differences", "[twostage]") {
  auto data = two_cell_continuous(5000, 1.0, -0.5);
  SECTION("weighted, no augmentation") {
    auto m = fit_wgbt(data, exact_params(20), Estimand::meandiff);
    CHECK(hte_at(m, 0) == Approx(1.0).margin(1e-8));
    CHECK(hte_at(m, 1) == Approx(-0.5).margin(1e-8));
    CHECK(m.stage2.loss == "stage2_meandiff_noaug");
  }
  SECTION("two-stage with in-sample augmentation") {
    auto m = fit_tsgbt(data, exact_params(20), exact_params(20), Estimand::meandiff, 1, AugPredictions::in_sample);
    CHECK(hte_at(m, 0) == Approx(1.0).margin(1e-8));
    CHECK(hte_at(m, 1) == Approx(-0.5).margin(1e-8));
    REQUIRE(m.stage1.has_value());
    std::vector<double> c0{0.0};
    CHECK(m.stage1->predict(c0) == Approx(2.0).margin(1e-8));
  }
}

TEST_CASE("stage 2 recovers two-cell risk ratios", "[twostage]") {
  const double risk[2][2] = {{0.2, 0.4}, {0.3, 0.3}};
  auto data = two_cell_binary(5000, risk);
  auto wg = fit_wgbt(data, exact_params(50), Estimand::riskratio);
  CHECK(hte_at(wg, 0) == Approx(2.0).epsilon(1e-6));
  CHECK(hte_at(wg, 1) == Approx(1.0).epsilon(1e-6));
  auto ts = fit_tsgbt(data, exact_params(50), exact_params(50), Estimand::riskratio, 1, AugPredictions::in_sample);
  CHECK(hte_at(ts, 0) == Approx(2.0).epsilon(1e-6));
  CHECK(hte_at(ts, 1) == Approx(1.0).epsilon(1e-6));
}

TEST_CASE("noisy binary trial estimates the risk ratio within five percent", "[twostage]") {
  Rng rng(404);
  const std::size_t n = 200000;
  std::vector<double> y(n), xv(n);
  std::vector<int> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
    xv[i] = static_cast<double>(i % 2);
    const double r = t[i] == 1 ? 0.5 : 0.25;
    y[i] = std::bernoulli_distribution(r)(rng) ? 1.0 : 0.0;
  }
  auto data = TrialDataset::make(y, t, Matrix(n, 1, xv), 0.5, OutcomeKind::binary);
  auto m = fit_wgbt(data, exact_params(50), Estimand::riskratio);
  CHECK(std::abs(hte_at(m, 0) / 2.0 - 1.0) < 0.05);
  CHECK(std::abs(hte_at(m, 1) / 2.0 - 1.0) < 0.05);
}

TEST_CASE("outcome equal to the augmentation gives no effect", "[twostage]") {
  Rng rng(5);
  std::normal_distribution<double> nd;
  const std::size_t n = 200;
  Matrix x(n, 2);
  std::vector<double> y(n);
  std::vector<int> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = nd(rng);
    x(i, 1) = nd(rng);
    y[i] = x(i, 0) * x(i, 1);
    t[i] = i % 2 ? 1 : -1;
  }
  auto data = TrialDataset::make(y, t, x, 0.5, OutcomeKind::continuous);
  BoostParams p;
  p.n_rounds = 30;
  p.min_child_weight = 0.0;
  auto m = fit_with_augmentation(data, y, p, Estimand::meandiff);
  CHECK(m.aug_source == AugSource::external);
  for (std::size_t i = 0; i < n; ++i) CHECK(predict_hte(m, x.row(i)) == 0.0);
}

TEST_CASE("zero augmentation matches the weighted comparator", "[twostage]") {
  Rng rng(6);
  std::normal_distribution<double> nd;
  const std::size_t n = 300;
  Matrix x(n, 3);
  std::vector<double> y(n);
  std::vector<int> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = nd(rng);
    t[i] = std::bernoulli_distribution(0.4)(rng) ? 1 : -1;
    y[i] = x(i, 0) + t[i] * 0.5 * x(i, 1) + nd(rng);
  }
  auto data = TrialDataset::make(y, t, x, 0.4, OutcomeKind::continuous);
  BoostParams p = default_stage2_params();
  p.n_rounds = 200;
  p.seed = 3;
  auto wg = fit_wgbt(data, p, Estimand::meandiff);
  auto zero = fit_with_augmentation(data, std::vector<double>(n, 0.0), p, Estimand::meandiff);
  CHECK(wg.stage2.trees == zero.stage2.trees);
  for (std::size_t i = 0; i < n; ++i) CHECK(predict_hte(wg, x.row(i)) == predict_hte(zero, x.row(i)));
}

TEST_CASE("out-of-fold augmentation is the default and needs cross-validation", "[twostage]") {
  auto data = two_cell_continuous(400, 1.0, 0.0);
  BoostParams p1 = exact_params(10);
  CHECK_THROWS_AS(fit_tsgbt(data, p1, exact_params(10), Estimand::meandiff), std::invalid_argument);
  p1.cv_folds = 5;
  p1.patience = 5;
  auto s = stage1_augmentation(data, p1, Estimand::meandiff, AugPredictions::out_of_fold);
  REQUIRE(s.a0.size() == data.n());
  for (std::size_t i = 0; i < data.n(); ++i) CHECK(s.a0[i] == s.fit.out_of_fold[i]);
  auto m = fit_tsgbt(data, p1, exact_params(10), Estimand::meandiff);
  CHECK(m.aug_predictions == AugPredictions::out_of_fold);
  CHECK(aug_predictions_from_string(to_string(AugPredictions::in_sample)) == AugPredictions::in_sample);
}

TEST_CASE("separate regressions", "[twostage]") {
  SECTION("constant arms") {
    const std::size_t n = 60;
    std::vector<double> y(n);
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = i % 2 ? 1 : -1;
      y[i] = t[i] == 1 ? 3.0 : 1.0;
    }
    Matrix x(n, 1);
    for (std::size_t i = 0; i < n; ++i) x(i, 0) = static_cast<double>(i);
    auto data = TrialDataset::make(y, t, x, 0.5, OutcomeKind::continuous);
    auto m = fit_sgbt(data, exact_params(5), Estimand::meandiff);
    for (double v : {0.0, 17.0, 59.0}) CHECK(hte_at(m, v) == Approx(2.0).margin(1e-12));
  }
  SECTION("binary arm rates") {
    const double risk[2][2] = {{0.2, 0.4}, {0.2, 0.4}};
    auto data = two_cell_binary(500, risk);
    auto m = fit_sgbt(data, exact_params(5), Estimand::riskratio);
    CHECK(hte_at(m, 0) == Approx(2.0).epsilon(1e-9));
    CHECK(hte_at(m, 1) == Approx(2.0).epsilon(1e-9));
  }
  SECTION("one empty arm is rejected") {
    Matrix x(4, 1, 0.0);
    auto data = TrialDataset::make({1, 2, 3, 4}, {1, 1, 1, 1}, x, 0.5, OutcomeKind::continuous);
    CHECK_THROWS_AS(fit_sgbt(data, exact_params(5), Estimand::meandiff), std::invalid_argument);
  }
}

TEST_CASE("empty stage-2 ensemble predicts no effect", "[twostage]") {
  TwoStageModel m;
  m.stage2.n_features = 1;
  m.estimand = Estimand::meandiff;
  CHECK(hte_at(m, 0.3) == 0.0);
  m.estimand = Estimand::riskratio;
  CHECK(hte_at(m, 0.3) == 1.0);
}

TEST_CASE("two-stage input errors", "[twostage]") {
  auto cont = two_cell_continuous(20, 1.0, 1.0);
  CHECK_THROWS_AS(fit_wgbt(cont, exact_params(5), Estimand::riskratio), std::invalid_argument);
  CHECK_THROWS_AS(fit_stage2(cont, std::vector<double>(3, 0.0), exact_params(5), Estimand::meandiff),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_with_augmentation(cont, std::vector<double>(19, 0.0), exact_params(5), Estimand::meandiff),
                  std::invalid_argument);
  CHECK_THROWS_AS(mode_from_string("xgb"), std::invalid_argument);
  CHECK(mode_from_string("sgbt") == Mode::sgbt);
}
