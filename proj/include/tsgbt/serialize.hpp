#pragma once

#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "boost.hpp"
#include "csv.hpp"
#include "inference.hpp"
#include "metrics.hpp"
#include "simgen.hpp"
#include "tree.hpp"
#include "twostage.hpp"

namespace tsgbt {

using json = nlohmann::json;

/// Rejects any key of `j` (an object) not in `allowed`.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
}

// --- BoostParams -----------------------------------------------------------

inline json to_json(const BoostParams& p) {
  return {{"n_rounds", p.n_rounds},
          {"learning_rate", p.learning_rate},
          {"gamma", p.gamma},
          {"lambda", p.lambda},
          {"max_depth", p.max_depth},
          {"min_child_weight", p.min_child_weight},
          {"subsample", p.subsample},
          {"colsample", p.colsample},
          {"seed", p.seed},
          {"cv_folds", p.cv_folds},
          {"patience", p.patience},
          {"cv_rule", p.cv_rule == CvRule::min ? "min" : "one_se"},
          {"base", p.base == BaseInit::minimizer ? "minimizer" : "zero"}};
}

/// Overlays the keys present in `j` onto `p`.
inline BoostParams boost_params_from_json(const json& j, BoostParams p) {
  check_keys(j,
             {"n_rounds", "learning_rate", "gamma", "lambda", "max_depth", "min_child_weight", "subsample",
              "colsample", "seed", "cv_folds", "patience", "cv_rule", "base"},
             "boost params");
  if (j.contains("n_rounds")) p.n_rounds = j.at("n_rounds").get<std::size_t>();
  if (j.contains("learning_rate")) p.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("gamma")) p.gamma = j.at("gamma").get<double>();
  if (j.contains("lambda")) p.lambda = j.at("lambda").get<double>();
  if (j.contains("max_depth")) p.max_depth = j.at("max_depth").get<std::size_t>();
  if (j.contains("min_child_weight")) p.min_child_weight = j.at("min_child_weight").get<double>();
  if (j.contains("subsample")) p.subsample = j.at("subsample").get<double>();
  if (j.contains("colsample")) p.colsample = j.at("colsample").get<double>();
  if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("cv_folds")) p.cv_folds = j.at("cv_folds").get<std::size_t>();
  if (j.contains("patience")) p.patience = j.at("patience").get<std::size_t>();
  if (j.contains("cv_rule")) {
    auto r = j.at("cv_rule").get<std::string>();
    if (r == "min") p.cv_rule = CvRule::min;
    else if (r == "one_se") p.cv_rule = CvRule::one_se;
    else throw std::invalid_argument("boost params: cv_rule must be 'min' or 'one_se'");
  }
  if (j.contains("base")) {
    auto b = j.at("base").get<std::string>();
    if (b == "minimizer") p.base = BaseInit::minimizer;
    else if (b == "zero") p.base = BaseInit::zero;
    else throw std::invalid_argument("boost params: base must be 'minimizer' or 'zero'");
  }
  p.validate();
  return p;
}

// --- Ensemble --------------------------------------------------------------
//
// {"loss": id, "learning_rate": eta, "base": F0, "n_features": p,
//  "feature_names": [...], "trees": [[[feature, threshold, left, right,
//  weight, gain, cover], ...], ...]}   (feature -1 marks a leaf)

inline json to_json(const Ensemble& e) {
  json trees = json::array();
  for (const auto& t : e.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.weight, n.gain, n.cover});
    trees.push_back(std::move(nodes));
  }
  return {{"loss", e.loss},
          {"learning_rate", e.learning_rate},
          {"base", e.base},
          {"n_features", e.n_features},
          {"feature_names", e.feature_names},
          {"trees", std::move(trees)}};
}

inline Ensemble ensemble_from_json(const json& j) {
  check_keys(j, {"loss", "learning_rate", "base", "n_features", "feature_names", "trees"}, "ensemble");
  Ensemble e;
  e.loss = j.at("loss").get<std::string>();
  e.learning_rate = j.at("learning_rate").get<double>();
  e.base = j.at("base").get<double>();
  e.n_features = j.at("n_features").get<std::size_t>();
  e.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& jt : j.at("trees")) {
    RegressionTree t;
    t.n_features = e.n_features;
    for (const auto& jn : jt) {
      if (!jn.is_array() || jn.size() != 7) throw std::invalid_argument("ensemble: node must be a 7-element array");
      TreeNode n;
      n.feature = jn[0].get<int>();
      n.threshold = jn[1].get<double>();
      n.left = jn[2].get<int>();
      n.right = jn[3].get<int>();
      n.weight = jn[4].get<double>();
      n.gain = jn[5].get<double>();
      n.cover = jn[6].get<double>();
      t.nodes.push_back(n);
    }
    const auto count = static_cast<int>(t.nodes.size());
    if (count == 0) throw std::invalid_argument("ensemble: tree without nodes");
    for (const auto& n : t.nodes)
      if (!n.is_leaf() && (n.feature >= static_cast<int>(e.n_features) || n.left <= 0 || n.right <= 0 ||
                           n.left >= count || n.right >= count))
        throw std::invalid_argument("ensemble: malformed split node");
    e.trees.push_back(std::move(t));
  }
  return e;
}

inline json to_json(const DiagnosticCurve& c) {
  return {{"loss", c.loss}, {"chosen_round", c.chosen_round}, {"cross_validated", c.cross_validated}};
}

inline DiagnosticCurve curve_from_json(const json& j) {
  check_keys(j, {"loss", "chosen_round", "cross_validated"}, "curve");
  return {j.at("loss").get<std::vector<double>>(), j.at("chosen_round").get<std::size_t>(),
          j.at("cross_validated").get<bool>()};
}

// --- Models ----------------------------------------------------------------

inline json to_json(const TwoStageModel& m) {
  return {{"format", "tsgbt-model"},
          {"version", 1},
          {"mode", to_string(m.mode)},
          {"estimand", to_string(m.estimand)},
          {"aug_source", to_string(m.aug_source)},
          {"aug_predictions", to_string(m.aug_predictions)},
          {"transform_stage1", m.estimand == Estimand::meandiff ? "identity" : "one_minus_two_sigmoid"},
          {"transform_hte", m.estimand == Estimand::meandiff ? "twice" : "exp"},
          {"feature_names", m.feature_names},
          {"params1", to_json(m.params1)},
          {"params2", to_json(m.params2)},
          {"stage1", m.stage1 ? to_json(*m.stage1) : json(nullptr)},
          {"stage2", to_json(m.stage2)},
          {"curve1", to_json(m.curve1)},
          {"curve2", to_json(m.curve2)}};
}

inline json to_json(const SeparateModel& m) {
  return {{"format", "tsgbt-model"},
          {"version", 1},
          {"mode", "sgbt"},
          {"estimand", to_string(m.estimand)},
          {"feature_names", m.feature_names},
          {"params", to_json(m.params)},
          {"treated", to_json(m.treated)},
          {"control", to_json(m.control)},
          {"curve_treated", to_json(m.curve_treated)},
          {"curve_control", to_json(m.curve_control)}};
}

inline TwoStageModel two_stage_model_from_json(const json& j) {
  check_keys(j,
             {"format", "version", "mode", "estimand", "aug_source", "aug_predictions", "transform_stage1", "transform_hte",
              "feature_names", "params1", "params2", "stage1", "stage2", "curve1", "curve2"},
             "model");
  if (j.at("format") != "tsgbt-model") throw std::invalid_argument("model: not a tsgbt model file");
  TwoStageModel m;
  m.mode = mode_from_string(j.at("mode").get<std::string>());
  if (m.mode == Mode::sgbt) throw std::invalid_argument("model: sgbt model read as two-stage model");
  m.estimand = estimand_from_string(j.at("estimand").get<std::string>());
  auto src = j.at("aug_source").get<std::string>();
  m.aug_source = src == "stage1" ? AugSource::stage1 : src == "none" ? AugSource::none : AugSource::external;
  m.aug_predictions = aug_predictions_from_string(j.at("aug_predictions").get<std::string>());
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.params1 = boost_params_from_json(j.at("params1"), BoostParams{});
  m.params2 = boost_params_from_json(j.at("params2"), BoostParams{});
  if (!j.at("stage1").is_null()) m.stage1 = ensemble_from_json(j.at("stage1"));
  m.stage2 = ensemble_from_json(j.at("stage2"));
  m.curve1 = curve_from_json(j.at("curve1"));
  m.curve2 = curve_from_json(j.at("curve2"));
  return m;
}

inline SeparateModel separate_model_from_json(const json& j) {
  check_keys(j,
             {"format", "version", "mode", "estimand", "feature_names", "params", "treated", "control",
              "curve_treated", "curve_control"},
             "model");
  SeparateModel m;
  m.estimand = estimand_from_string(j.at("estimand").get<std::string>());
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.params = boost_params_from_json(j.at("params"), BoostParams{});
  m.treated = ensemble_from_json(j.at("treated"));
  m.control = ensemble_from_json(j.at("control"));
  m.curve_treated = curve_from_json(j.at("curve_treated"));
  m.curve_control = curve_from_json(j.at("curve_control"));
  return m;
}

// --- Simulation specs ------------------------------------------------------

inline json to_json(const SimSpec& s) {
  json pairs = json::array();
  for (const auto& pc : s.pairs) pairs.push_back({pc.i, pc.j, pc.coef});
  return {{"outcome_kind", to_string(s.outcome_kind)},
          {"setting", s.setting},
          {"n", s.n},
          {"p", s.p},
          {"rho", s.rho},
          {"cov_structure", to_string(s.cov_structure)},
          {"alpha", s.alpha},
          {"beta", s.beta},
          {"gamma", s.gamma},
          {"pairs", std::move(pairs)},
          {"effect_multiplier", s.effect_multiplier},
          {"sigma0", s.sigma0},
          {"C", s.C},
          {"p_treat", s.p_treat},
          {"seed", s.seed}};
}

/// Full spec from its JSON echo (every key required).
inline SimSpec sim_spec_from_json(const json& j) {
  check_keys(j,
             {"outcome_kind", "setting", "n", "p", "rho", "cov_structure", "alpha", "beta", "gamma", "pairs",
              "effect_multiplier", "sigma0", "C", "p_treat", "seed"},
             "simulation spec");
  SimSpec s;
  s.outcome_kind = outcome_kind_from_string(j.at("outcome_kind").get<std::string>());
  s.setting = j.at("setting").get<std::string>();
  s.n = j.at("n").get<std::size_t>();
  s.p = j.at("p").get<std::size_t>();
  s.rho = j.at("rho").get<double>();
  s.cov_structure = cov_structure_from_string(j.at("cov_structure").get<std::string>());
  s.alpha = j.at("alpha").get<std::vector<double>>();
  s.beta = j.at("beta").get<std::vector<double>>();
  s.gamma = j.at("gamma").get<std::vector<double>>();
  for (const auto& jp : j.at("pairs"))
    s.pairs.push_back({jp.at(0).get<std::size_t>(), jp.at(1).get<std::size_t>(), jp.at(2).get<double>()});
  s.effect_multiplier = j.at("effect_multiplier").get<double>();
  s.sigma0 = j.at("sigma0").get<double>();
  s.C = j.at("C").get<double>();
  s.p_treat = j.at("p_treat").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

inline bool operator==(const SimSpec& a, const SimSpec& b) {
  return a.outcome_kind == b.outcome_kind && a.setting == b.setting && a.n == b.n && a.p == b.p &&
         a.rho == b.rho && a.cov_structure == b.cov_structure && a.alpha == b.alpha && a.beta == b.beta &&
         a.gamma == b.gamma && a.pairs == b.pairs && a.effect_multiplier == b.effect_multiplier &&
         a.sigma0 == b.sigma0 && a.C == b.C && a.p_treat == b.p_treat && a.seed == b.seed;
}

// --- Permutation results ---------------------------------------------------

inline json to_json(const PermutationResult& r) {
  return {{"observed_stat", r.observed_stat},
          {"B", r.B},
          {"p_value", r.p_value},
          {"stat_kind", to_string(r.stat_kind)},
          {"seed", r.seed},
          {"rounds", r.rounds},
          {"p_value_rule", r.rule == PValueRule::proportion ? "proportion" : "plus_one"},
          {"retuned", r.retuned}};
}

// --- Files ------------------------------------------------------------------

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("invalid JSON in '" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

/// round,mean_heldout_loss (or training loss when not cross-validated).
inline void write_curve_csv(const std::string& path, const DiagnosticCurve& c) {
  std::vector<double> rounds(c.loss.size());
  for (std::size_t r = 0; r < rounds.size(); ++r) rounds[r] = static_cast<double>(r);
  csv::write_file(path, {"round", c.cross_validated ? "mean_heldout_loss" : "training_loss"}, {rounds, c.loss});
}

inline void write_importance_csv(const std::string& path, const ImportanceReport& rep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "feature,raw_gain,relative\n";
  for (const auto& e : rep.entries)
    out << e.name << ',' << csv::format_double(e.raw_gain) << ',' << csv::format_double(e.relative) << '\n';
}

}  // namespace tsgbt
