// Simulates a small trial, fits the two-stage model and the weighted
// comparator, scores both on fresh test rows and runs a short permutation test.

#include <cstdio>

#include <tsgbt/tsgbt.hpp>

using namespace tsgbt;

int main() {
  const auto spec = make_sim_spec(OutcomeKind::continuous, "2", 300, 10);
  Rng train_rng = substream(1, {0}), test_rng = substream(1, {1});
  auto train = generate(spec, train_rng);
  auto test = generate(make_sim_spec(OutcomeKind::continuous, "2", 1000, 10), test_rng);

  BoostParams p1 = default_stage1_params(), p2 = simulation_stage2_params();
  p1.seed = 11;
  p2.seed = 12;
  auto ts = fit_tsgbt(train.data, p1, p2, Estimand::meandiff);
  auto wg = fit_wgbt(train.data, p2, Estimand::meandiff);

  std::vector<double> est_ts(test.data.n()), est_wg(test.data.n());
  for (std::size_t i = 0; i < test.data.n(); ++i) {
    est_ts[i] = predict_hte(ts, test.data.x().row(i));
    est_wg[i] = predict_hte(wg, test.data.x().row(i));
  }
  std::printf("stage-1 rounds %zu, stage-2 rounds %zu\n", ts.stage1->trees.size(), ts.stage2.trees.size());
  std::printf("test MSE  tsgbt %.3f  wgbt %.3f\n", mse_scale(est_ts, test.true_tau, Estimand::meandiff),
              mse_scale(est_wg, test.true_tau, Estimand::meandiff));
  if (auto r = spearman(est_ts, test.true_tau)) std::printf("tsgbt Spearman %.3f\n", *r);

  auto importance = variable_importance(ts.stage2);
  std::printf("top features:");
  for (std::size_t k = 0; k < 4 && k < importance.entries.size(); ++k)
    std::printf(" %s(%.0f)", importance.entries[k].name.c_str(), importance.entries[k].relative);
  std::printf("\n");

  auto a0 = stage1_augmentation(train.data, p1, Estimand::meandiff, AugPredictions::out_of_fold).a0;
  PermutationOptions opt;
  opt.B = 20;
  opt.seed = 5;
  auto perm = permutation_test(train.data, a0, default_stage2_params(), Estimand::meandiff, opt);
  std::printf("permutation test: stat %.4f, p = %.2f over B = %zu\n", perm.observed_stat, perm.p_value, perm.B);
  return 0;
}
