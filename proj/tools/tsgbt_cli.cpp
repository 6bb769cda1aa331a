// tsgbt: fit, predict, permtest, simulate and benchmark subcommands.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <tsgbt/tsgbt.hpp>

namespace fs = std::filesystem;
using namespace tsgbt;

namespace {

/// Validation failure in a config or input file (exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::string data;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::size_t threads = default_threads();
  std::optional<std::string> mode;
};

void add_common(CLI::App* sub, CommonFlags& f, bool with_data = true) {
  sub->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  if (with_data) sub->add_option("--data", f.data, "input CSV")->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "output directory (created if missing)");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--threads", f.threads, "worker threads (default: $TSGBT_THREADS or hardware count)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--mode", f.mode, "estimator")->check(CLI::IsMember({"tsgbt", "wgbt", "sgbt"}));
}

json load_config(const CommonFlags& f) { return f.config.empty() ? json::object() : read_json_file(f.config); }

std::string out_path(const CommonFlags& f, const std::string& name) { return (fs::path(f.out) / name).string(); }

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

CsvSchema schema_from_json(const json& j) {
  check_keys(j, {"outcome", "treatment", "weight", "covariates", "exclude", "coding", "outcome_kind", "p_treat"},
             "schema");
  CsvSchema s;
  s.outcome = get_or<std::string>(j, "outcome", s.outcome);
  s.treatment = get_or<std::string>(j, "treatment", s.treatment);
  if (j.contains("weight")) s.weight = j.at("weight").get<std::string>();
  s.covariates = get_or<std::vector<std::string>>(j, "covariates", {});
  s.exclude = get_or<std::vector<std::string>>(j, "exclude", s.exclude);
  auto coding = get_or<std::string>(j, "coding", "plus_minus_one");
  if (coding == "zero_one") s.coding = TreatmentCoding::zero_one;
  else if (coding != "plus_minus_one") throw UsageError("schema: coding must be 'plus_minus_one' or 'zero_one'");
  s.outcome_kind = outcome_kind_from_string(get_or<std::string>(j, "outcome_kind", "continuous"));
  if (j.contains("p_treat")) s.p_treat = j.at("p_treat").get<double>();
  return s;
}

/// Settings shared by fit and permtest.
struct FitSettings {
  CsvSchema schema;
  Estimand estimand = Estimand::meandiff;
  Mode mode = Mode::tsgbt;
  BoostParams params1 = default_stage1_params();
  BoostParams params2 = default_stage2_params();
  BoostParams params_sgbt = default_stage1_params();
  AugPredictions aug_predictions = AugPredictions::out_of_fold;
  std::optional<std::string> aug_file;
  std::string aug_column = "a0";
  std::optional<double> threshold;
  std::uint64_t seed = 0;
};

const std::initializer_list<const char*> kFitKeys = {
    "schema", "estimand", "mode", "params1", "params2", "params_sgbt", "aug_predictions", "aug_file",
    "aug_column", "threshold", "seed"};

void read_fit_settings(const json& j, const CommonFlags& f, FitSettings& s) {
  s.schema = schema_from_json(get_or<json>(j, "schema", json::object()));
  s.estimand = j.contains("estimand") ? estimand_from_string(j.at("estimand").get<std::string>())
                                      : default_estimand(s.schema.outcome_kind);
  s.mode = mode_from_string(f.mode ? *f.mode : get_or<std::string>(j, "mode", "tsgbt"));
  s.params1 = boost_params_from_json(get_or<json>(j, "params1", json::object()), s.params1);
  s.params2 = boost_params_from_json(get_or<json>(j, "params2", json::object()), s.params2);
  s.params_sgbt = boost_params_from_json(get_or<json>(j, "params_sgbt", json::object()), s.params_sgbt);
  s.aug_predictions = aug_predictions_from_string(get_or<std::string>(j, "aug_predictions", "out_of_fold"));
  if (j.contains("aug_file")) s.aug_file = j.at("aug_file").get<std::string>();
  s.aug_column = get_or<std::string>(j, "aug_column", s.aug_column);
  if (j.contains("threshold")) s.threshold = j.at("threshold").get<double>();
  s.seed = f.seed ? *f.seed : get_or<std::uint64_t>(j, "seed", 0);
  // Stage seeds are derived from the master seed so one flag controls a run.
  s.params1.seed = substream_seed(s.seed, {1});
  s.params2.seed = substream_seed(s.seed, {2});
  s.params_sgbt.seed = substream_seed(s.seed, {4});
  if (s.aug_file && s.mode != Mode::tsgbt) throw UsageError("aug_file requires mode tsgbt");
}

TrialDataset load_data(const CommonFlags& f, const CsvSchema& schema) {
  if (f.data.empty()) throw UsageError("--data is required");
  return load_csv(f.data, schema);
}

std::vector<double> read_aug_file(const std::string& path, const std::string& column, std::size_t n) {
  auto table = csv::read_file(path);
  auto col = table.column_index(column);
  if (!col) throw csv::ParseError("augmentation file: missing column '" + column + "'", 0, column);
  if (table.rows.size() != n)
    throw UsageError("augmentation file has " + std::to_string(table.rows.size()) + " rows, data has " +
                     std::to_string(n));
  std::vector<double> a0(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto v = csv::parse_double(table.rows[r][*col]);
    if (!v || !std::isfinite(*v))
      throw csv::ParseError("augmentation file: row " + std::to_string(r + 1) + ": non-numeric value", r + 1, column);
    a0[r] = *v;
  }
  return a0;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

json tau_summary(const std::vector<double>& tau, double threshold) {
  json q = json::object();
  for (auto [name, p] : {std::pair{"min", 0.0}, {"q25", 0.25}, {"median", 0.5}, {"q75", 0.75}, {"max", 1.0}})
    q[name] = quantile(tau, p);
  double below = 0.0;
  for (double v : tau) below += v < threshold;
  return {{"quantiles", q}, {"threshold", threshold}, {"proportion_below_threshold", below / static_cast<double>(tau.size())}};
}

Ensemble merged_arms(const SeparateModel& m) {
  Ensemble e = m.treated;
  e.trees.insert(e.trees.end(), m.control.trees.begin(), m.control.trees.end());
  return e;
}

void write_tau(const std::string& path, const std::vector<double>& tau) {
  std::vector<double> row(tau.size());
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<double>(i + 1);
  csv::write_file(path, {"row", "tau_hat"}, {row, tau});
}

// --- fit ---------------------------------------------------------------------

int cmd_fit(const CommonFlags& f) {
  json cfg = load_config(f);
  check_keys(cfg, kFitKeys, "fit config");
  FitSettings s;
  read_fit_settings(cfg, f, s);
  auto data = load_data(f, s.schema);
  fs::create_directories(f.out);

  std::vector<double> tau(data.n());
  json summary = {{"n", data.n()}, {"p", data.p()}, {"mode", to_string(s.mode)}, {"estimand", to_string(s.estimand)},
                  {"seed", s.seed}};
  if (s.mode == Mode::sgbt) {
    auto m = fit_sgbt(data, s.params_sgbt, s.estimand, f.threads);
    for (std::size_t i = 0; i < data.n(); ++i) tau[i] = predict_hte(m, data.x().row(i));
    write_json_file(out_path(f, "model.json"), to_json(m));
    write_curve_csv(out_path(f, "curve_treated.csv"), m.curve_treated);
    write_curve_csv(out_path(f, "curve_control.csv"), m.curve_control);
    write_importance_csv(out_path(f, "importance.csv"), variable_importance(merged_arms(m)));
    summary["rounds_treated"] = m.treated.trees.size();
    summary["rounds_control"] = m.control.trees.size();
    summary["aug_source"] = nullptr;
  } else {
    TwoStageModel m;
    if (s.mode == Mode::wgbt) {
      m = fit_wgbt(data, s.params2, s.estimand, f.threads);
    } else if (s.aug_file) {
      auto a0 = read_aug_file(*s.aug_file, s.aug_column, data.n());
      m = fit_with_augmentation(data, a0, s.params2, s.estimand, f.threads);
    } else {
      m = fit_tsgbt(data, s.params1, s.params2, s.estimand, f.threads, s.aug_predictions);
    }
    for (std::size_t i = 0; i < data.n(); ++i) tau[i] = predict_hte(m, data.x().row(i));
    write_json_file(out_path(f, "model.json"), to_json(m));
    if (m.stage1) write_curve_csv(out_path(f, "curve_stage1.csv"), m.curve1);
    write_curve_csv(out_path(f, "curve_stage2.csv"), m.curve2);
    write_importance_csv(out_path(f, "importance.csv"), variable_importance(m.stage2));
    summary["rounds_stage1"] = m.stage1 ? json(m.stage1->trees.size()) : json(nullptr);
    summary["rounds_stage2"] = m.stage2.trees.size();
    summary["aug_source"] = to_string(m.aug_source);
    if (m.aug_source == AugSource::stage1) summary["aug_predictions"] = to_string(m.aug_predictions);
    if (m.aug_source == AugSource::external) summary["aug_file"] = fs::path(*s.aug_file).filename().string();
  }
  write_tau(out_path(f, "tau.csv"), tau);
  const double threshold = s.threshold ? *s.threshold : (s.estimand == Estimand::riskratio ? 1.0 : 0.0);
  summary["tau_hat"] = tau_summary(tau, threshold);
  write_json_file(out_path(f, "summary.json"), summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// --- predict -----------------------------------------------------------------

int cmd_predict(const CommonFlags& f, const std::string& model_path) {
  json cfg = load_config(f);
  check_keys(cfg, {"schema"}, "predict config");
  if (f.data.empty()) throw UsageError("--data is required");
  json mj = read_json_file(model_path);
  const bool separate = mj.at("mode") == "sgbt";
  std::optional<SeparateModel> sm;
  std::optional<TwoStageModel> tm;
  std::vector<std::string> names;
  if (separate) sm = separate_model_from_json(mj), names = sm->feature_names;
  else tm = two_stage_model_from_json(mj), names = tm->feature_names;

  auto table = csv::read_file(f.data);
  const std::size_t n = table.rows.size();
  Matrix x(n, names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto col = table.column_index(names[j]);
    if (!col) throw csv::ParseError("missing covariate column '" + names[j] + "'", 0, names[j]);
    for (std::size_t r = 0; r < n; ++r) {
      auto v = csv::parse_double(table.rows[r][*col]);
      if (!v || !std::isfinite(*v))
        throw csv::ParseError("row " + std::to_string(r + 1) + ", column '" + names[j] + "': non-numeric value", r + 1,
                              names[j]);
      x(r, j) = *v;
    }
  }
  std::vector<double> tau(n);
  for (std::size_t i = 0; i < n; ++i) tau[i] = separate ? predict_hte(*sm, x.row(i)) : predict_hte(*tm, x.row(i));
  fs::create_directories(f.out);
  write_tau(out_path(f, "tau.csv"), tau);
  std::cout << "wrote " << n << " predictions to " << out_path(f, "tau.csv") << '\n';
  return 0;
}

// --- permtest ----------------------------------------------------------------

int cmd_permtest(const CommonFlags& f) {
  json cfg = load_config(f);
  std::vector<const char*> keys(kFitKeys);
  for (const char* k : {"B", "stat", "p_value_rule", "retune"}) keys.push_back(k);
  for (auto it = cfg.begin(); it != cfg.end(); ++it)
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }) == keys.end())
      throw UsageError("permtest config: unknown key '" + it.key() + "'");
  FitSettings s;
  read_fit_settings(cfg, f, s);
  if (s.mode == Mode::sgbt) throw UsageError("permtest supports modes tsgbt and wgbt");
  PermutationOptions opt;
  opt.B = get_or<std::size_t>(cfg, "B", opt.B);
  opt.stat = dispersion_kind_from_string(get_or<std::string>(cfg, "stat", "variance"));
  auto rule = get_or<std::string>(cfg, "p_value_rule", "proportion");
  if (rule == "plus_one") opt.rule = PValueRule::plus_one;
  else if (rule != "proportion") throw UsageError("p_value_rule must be 'proportion' or 'plus_one'");
  opt.retune = get_or<bool>(cfg, "retune", false);
  opt.seed = substream_seed(s.seed, {3});
  opt.threads = f.threads;

  auto data = load_data(f, s.schema);
  fs::create_directories(f.out);
  std::vector<double> a0;
  std::string source = "none";
  if (s.mode == Mode::tsgbt) {
    if (s.aug_file) {
      a0 = read_aug_file(*s.aug_file, s.aug_column, data.n());
      source = "external";
    } else {
      a0 = stage1_augmentation(data, s.params1, s.estimand, s.aug_predictions, f.threads).a0;
      source = "stage1";
    }
  }
  auto res = permutation_test(data, a0, s.params2, s.estimand, opt);
  json out = to_json(res);
  out["mode"] = to_string(s.mode);
  out["estimand"] = to_string(s.estimand);
  out["aug_source"] = source;
  out["n"] = data.n();
  write_json_file(out_path(f, "permutation.json"), out);
  std::vector<double> idx(res.perm_stats.size());
  for (std::size_t b = 0; b < idx.size(); ++b) idx[b] = static_cast<double>(b + 1);
  csv::write_file(out_path(f, "permutation_stats.csv"), {"replicate", "stat"}, {idx, res.perm_stats});
  std::cout << out.dump(2) << '\n';
  return 0;
}

// --- simulate ----------------------------------------------------------------

int cmd_simulate(const CommonFlags& f) {
  json cfg = load_config(f);
  check_keys(cfg, {"outcome_kind", "setting", "n", "p", "seed", "spec", "file"}, "simulate config");
  SimSpec spec;
  if (cfg.contains("spec")) {
    spec = sim_spec_from_json(cfg.at("spec"));
  } else {
    auto kind = outcome_kind_from_string(get_or<std::string>(cfg, "outcome_kind", "continuous"));
    spec = make_sim_spec(kind, get_or<std::string>(cfg, "setting", "1"), get_or<std::size_t>(cfg, "n", 300),
                         get_or<std::size_t>(cfg, "p", 50));
    spec.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  }
  if (f.seed) spec.seed = *f.seed;
  spec.validate();
  json echo = to_json(spec);
  if (!(sim_spec_from_json(json::parse(echo.dump())) == spec))
    throw std::runtime_error("simulation spec does not round-trip through JSON");

  Rng rng(spec.seed);
  auto d = generate(spec, rng);
  fs::create_directories(f.out);
  std::vector<std::string> header{"y", "t"};
  std::vector<std::vector<double>> cols{d.data.y(), std::vector<double>(d.data.t().begin(), d.data.t().end())};
  for (std::size_t j = 0; j < spec.p; ++j) {
    header.push_back("x" + std::to_string(j + 1));
    std::vector<double> c(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) c[i] = d.data.x()(i, j);
    cols.push_back(std::move(c));
  }
  header.push_back("true_tau");
  cols.push_back(d.true_tau);
  const std::string file = get_or<std::string>(cfg, "file", "data.csv");
  csv::write_file(out_path(f, file), header, cols);
  write_json_file(out_path(f, "spec.json"), echo);
  std::cout << "wrote " << spec.n << " rows to " << out_path(f, file);
  if (spec.outcome_kind == OutcomeKind::binary) std::cout << " (prevalence " << d.prevalence() << ")";
  std::cout << '\n';
  return 0;
}

// --- benchmark ---------------------------------------------------------------

int cmd_benchmark(const CommonFlags& f) {
  json cfg = load_config(f);
  check_keys(cfg,
             {"outcome_kind", "setting", "n", "p", "n_test", "replicates", "methods", "params1", "params2",
              "params_sgbt", "seed"},
             "benchmark config");
  BenchmarkConfig bc;
  bc.outcome_kind = outcome_kind_from_string(get_or<std::string>(cfg, "outcome_kind", "continuous"));
  bc.setting = get_or<std::string>(cfg, "setting", bc.setting);
  bc.n = get_or<std::size_t>(cfg, "n", bc.n);
  bc.p = get_or<std::size_t>(cfg, "p", bc.p);
  bc.n_test = get_or<std::size_t>(cfg, "n_test", bc.n_test);
  bc.replicates = get_or<std::size_t>(cfg, "replicates", bc.replicates);
  if (cfg.contains("methods")) {
    bc.methods.clear();
    for (const auto& m : cfg.at("methods")) bc.methods.push_back(mode_from_string(m.get<std::string>()));
  }
  if (f.mode) bc.methods = {mode_from_string(*f.mode)};
  bc.params1 = boost_params_from_json(get_or<json>(cfg, "params1", json::object()), bc.params1);
  bc.params2 = boost_params_from_json(get_or<json>(cfg, "params2", json::object()), bc.params2);
  bc.params_sgbt = boost_params_from_json(get_or<json>(cfg, "params_sgbt", json::object()), bc.params_sgbt);
  bc.seed = f.seed ? *f.seed : get_or<std::uint64_t>(cfg, "seed", 0);

  auto rep = run_benchmark(bc, f.threads);
  fs::create_directories(f.out);
  {
    std::ofstream out(out_path(f, "benchmark.csv"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + out_path(f, "benchmark.csv") + "'");
    out << "replicate,method,mse,scorr,rounds_stage2\n";
    for (const auto& r : rep.rows)
      out << r.replicate + 1 << ',' << to_string(r.method) << ',' << csv::format_double(r.mse) << ','
          << (r.scorr ? csv::format_double(*r.scorr) : "NA") << ',' << r.rounds_stage2 << '\n';
  }
  json methods = json::array(), summary = json::array();
  for (auto m : bc.methods) methods.push_back(to_string(m));
  for (const auto& s : rep.summary)
    summary.push_back({{"method", to_string(s.method)},
                       {"median_mse", s.median_mse},
                       {"median_scorr", s.median_scorr ? json(*s.median_scorr) : json(nullptr)},
                       {"n_scorr", s.n_scorr}});
  json out = {{"outcome_kind", to_string(bc.outcome_kind)}, {"setting", bc.setting}, {"n", bc.n}, {"p", bc.p},
              {"n_test", bc.n_test}, {"replicates", bc.replicates}, {"methods", methods},
              {"params1", to_json(bc.params1)}, {"params2", to_json(bc.params2)},
              {"params_sgbt", to_json(bc.params_sgbt)}, {"seed", bc.seed}, {"summary", summary}};
  write_json_file(out_path(f, "benchmark.json"), out);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage gradient boosted trees for heterogeneous treatment effects"};
  app.require_subcommand(1);
  CommonFlags fit_f, pred_f, perm_f, sim_f, bench_f;
  std::string model_path;

  auto* fit = app.add_subcommand("fit", "fit a model and write tau, curves, importance and a summary");
  add_common(fit, fit_f);
  auto* pred = app.add_subcommand("predict", "score new rows with a saved model");
  add_common(pred, pred_f);
  pred->add_option("--model", model_path, "model.json from fit")->required()->check(CLI::ExistingFile);
  auto* perm = app.add_subcommand("permtest", "permutation test for a constant treatment effect");
  add_common(perm, perm_f);
  auto* sim = app.add_subcommand("simulate", "generate a simulated trial");
  add_common(sim, sim_f, false);
  auto* bench = app.add_subcommand("benchmark", "compare estimators over simulated replicates");
  add_common(bench, bench_f, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*fit) return cmd_fit(fit_f);
    if (*pred) return cmd_predict(pred_f, model_path);
    if (*perm) return cmd_permtest(perm_f);
    if (*sim) return cmd_simulate(sim_f);
    if (*bench) return cmd_benchmark(bench_f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
