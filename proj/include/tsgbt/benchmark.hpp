#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simgen.hpp"
#include "twostage.hpp"

namespace tsgbt {

/// Repeated simulate / fit / score comparison of the three estimators.
struct BenchmarkConfig {
  OutcomeKind outcome_kind = OutcomeKind::continuous;
  std::string setting = "2";
  std::size_t n = 300;
  std::size_t p = 50;
  std::size_t n_test = 1000;
  std::size_t replicates = 20;
  std::vector<Mode> methods{Mode::tsgbt, Mode::wgbt, Mode::sgbt};
  BoostParams params1 = default_stage1_params();
  BoostParams params2 = simulation_stage2_params();
  BoostParams params_sgbt = default_stage1_params();
  std::uint64_t seed = 0;
};

struct BenchmarkRow {
  std::size_t replicate = 0;
  Mode method = Mode::tsgbt;
  double mse = 0.0;
  std::optional<double> scorr;  ///< empty when the estimate is constant
  std::size_t rounds_stage2 = 0;
};

struct MethodSummary {
  Mode method = Mode::tsgbt;
  double median_mse = 0.0;
  std::optional<double> median_scorr;
  std::size_t n_scorr = 0;  ///< replicates with a defined correlation
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;  ///< replicate-major, methods in config order
  std::vector<MethodSummary> summary;

  const MethodSummary& of(Mode m) const {
    for (const auto& s : summary)
      if (s.method == m) return s;
    throw std::out_of_range("benchmark report has no method '" + std::string(to_string(m)) + "'");
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Replicate r draws its training set from substream (seed, r, 0) and its
/// test set from (seed, r, 1); fits use seeds derived from (seed, r, 2).
/// Replicates run in parallel; results do not depend on `threads`.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, std::size_t threads = 1) {
  if (cfg.replicates == 0) throw std::invalid_argument("benchmark: replicates must be positive");
  if (cfg.methods.empty()) throw std::invalid_argument("benchmark: no methods requested");
  if (cfg.n_test < 2) throw std::invalid_argument("benchmark: n_test must be at least 2");
  const Estimand estimand = default_estimand(cfg.outcome_kind);
  SimSpec train_spec = make_sim_spec(cfg.outcome_kind, cfg.setting, cfg.n, cfg.p);
  SimSpec test_spec = make_sim_spec(cfg.outcome_kind, cfg.setting, cfg.n_test, cfg.p);

  const std::size_t n_methods = cfg.methods.size();
  BenchmarkReport rep;
  rep.rows.resize(cfg.replicates * n_methods);
  parallel_for(cfg.replicates, threads, [&](std::size_t r) {
    Rng train_rng = substream(cfg.seed, {r, 0});
    Rng test_rng = substream(cfg.seed, {r, 1});
    auto train = generate(train_spec, train_rng);
    auto test = generate(test_spec, test_rng);
    const std::uint64_t fit_seed = substream_seed(cfg.seed, {r, 2});
    for (std::size_t m = 0; m < n_methods; ++m) {
      const Mode mode = cfg.methods[m];
      std::vector<double> est(cfg.n_test);
      std::size_t rounds = 0;
      if (mode == Mode::sgbt) {
        BoostParams ps = cfg.params_sgbt;
        ps.seed = fit_seed;
        auto model = fit_sgbt(train.data, ps, estimand);
        for (std::size_t i = 0; i < cfg.n_test; ++i) est[i] = predict_hte(model, test.data.x().row(i));
      } else {
        BoostParams p1 = cfg.params1, p2 = cfg.params2;
        p1.seed = fit_seed;
        p2.seed = substream_seed(fit_seed, {2});
        auto model = mode == Mode::tsgbt ? fit_tsgbt(train.data, p1, p2, estimand) : fit_wgbt(train.data, p2, estimand);
        for (std::size_t i = 0; i < cfg.n_test; ++i) est[i] = predict_hte(model, test.data.x().row(i));
        rounds = model.stage2.trees.size();
      }
      auto& row = rep.rows[r * n_methods + m];
      row.replicate = r;
      row.method = mode;
      row.mse = mse_scale(est, test.true_tau, estimand);
      row.scorr = spearman(est, test.true_tau);
      row.rounds_stage2 = rounds;
    }
  });

  for (std::size_t m = 0; m < n_methods; ++m) {
    MethodSummary s;
    s.method = cfg.methods[m];
    std::vector<double> mse, sc;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      const auto& row = rep.rows[r * n_methods + m];
      mse.push_back(row.mse);
      if (row.scorr) sc.push_back(*row.scorr);
    }
    s.median_mse = median_of(mse);
    s.n_scorr = sc.size();
    if (!sc.empty()) s.median_scorr = median_of(sc);
    rep.summary.push_back(s);
  }
  return rep;
}

}  // namespace tsgbt
