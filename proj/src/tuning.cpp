#include "fairpost/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "fairpost/error.hpp"
#include "fairpost/numeric.hpp"

namespace fairpost::tuning {

namespace {

void check_thresholds(std::span<const double> thresholds) {
  if (thresholds.empty()) throw InvalidArgument("threshold grid is empty");
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) {
      throw InvalidArgument("threshold " + std::to_string(t) + " outside (0,1)");
    }
  }
}

FairnessReport report_at(const GroupedLabels& g, std::span<const double> scores, double t,
                         EoMode mode) {
  const auto preds = threshold_predictions(scores, t);
  return fairness_report(g, scores, preds, mode);
}

// Epsilon-less points sort first.
double eps_key(const OperatingPoint& p) { return p.epsilon ? *p.epsilon : -1.0; }

}  // namespace

void to_json(nlohmann::json& j, const OperatingPoint& p) {
  j = nlohmann::json{{"epsilon", p.epsilon ? nlohmann::json(*p.epsilon) : nlohmann::json()},
                     {"threshold", p.threshold},
                     {"calibrated", p.calibrated},
                     {"dev_eval", p.dev_eval}};
  if (p.test) j["test"] = *p.test;
}

void from_json(const nlohmann::json& j, OperatingPoint& p) {
  const auto& e = j.at("epsilon");
  p.epsilon = e.is_null() ? std::nullopt : std::optional<double>(e.get<double>());
  p.threshold = j.at("threshold").get<double>();
  p.calibrated = j.at("calibrated").get<bool>();
  p.dev_eval = j.at("dev_eval").get<FairnessReport>();
  p.test = j.contains("test") ? std::optional<FairnessReport>(j.at("test").get<FairnessReport>())
                              : std::nullopt;
}

std::vector<double> default_epsilons() { return {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}; }

std::vector<double> default_thresholds() {
  std::vector<double> out;
  for (int k = 1; k <= 19; ++k) out.push_back(k / 20.0);
  return out;
}

std::vector<double> pipeline_scores(const ScoredDataset& ds, const Calibrator& calibrator,
                                    bool calibrated) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records()) {
    if (calibrated) {
      out.push_back(calibrator.apply(r));
    } else if (r.score) {
      out.push_back(*r.score);
    } else {
      out.push_back(identity_calibrator().apply(r));
    }
  }
  return out;
}

std::vector<OperatingPoint> tpp_sweep(const ScoredDataset& dev_eval, const std::string& attribute,
                                      std::span<const double> thresholds, EoMode mode) {
  check_thresholds(thresholds);
  const auto g = GroupedLabels::from(dev_eval, attribute);
  const auto scores = pipeline_scores(dev_eval, identity_calibrator(), false);
  std::vector<OperatingPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    OperatingPoint p;
    p.threshold = t;
    p.dev_eval = report_at(g, scores, t, mode);
    out.push_back(std::move(p));
  }
  return out;
}

const fst::Model* FstGrid::model_for(double epsilon) const {
  for (const auto& m : models) {
    if (m.epsilon == epsilon) return &m;
  }
  return nullptr;
}

FstGrid fst_grid(const ScoredDataset& dev_train, const ScoredDataset& dev_eval,
                 const std::string& attribute, std::span<const double> epsilons,
                 std::span<const double> thresholds, bool calibrate, const fst::Options& opts) {
  check_thresholds(thresholds);
  if (epsilons.empty()) throw InvalidArgument("epsilon grid is empty");
  FstGrid grid;
  grid.calibrator = calibrate ? fit_logistic(dev_train) : identity_calibrator();
  const auto train_scores = pipeline_scores(dev_train, grid.calibrator, calibrate);
  const auto eval_scores = pipeline_scores(dev_eval, grid.calibrator, calibrate);
  const auto train_groups = dev_train.membership(attribute, MissingMembership::complement);
  const auto g = GroupedLabels::from(dev_eval, attribute);

  for (double eps : epsilons) {
    fst::Model model;
    try {
      model = fst::fit_scores(train_scores, train_groups, eps, opts);
    } catch (const DegenerateGroupError&) {
      throw;  // a data problem, identical for every epsilon
    } catch (const Error& e) {
      grid.failures.push_back({eps, e.what()});
      continue;
    }
    model.attribute = attribute;
    std::vector<double> transformed(eval_scores.size());
    for (std::size_t i = 0; i < eval_scores.size(); ++i) {
      transformed[i] = model.transform(eval_scores[i], g.membership[i] == 1 ? 1 : 0);
    }
    for (double t : thresholds) {
      OperatingPoint p;
      p.epsilon = eps;
      p.threshold = t;
      p.calibrated = calibrate;
      p.dev_eval = report_at(g, transformed, t, opts.mode);
      grid.points.push_back(std::move(p));
    }
    grid.models.push_back(std::move(model));
  }
  if (grid.models.empty()) {
    std::string msg = "FST failed for every epsilon:";
    for (const auto& f : grid.failures) msg += " [" + std::to_string(f.epsilon) + "] " + f.message;
    throw Error(msg);
  }
  return grid;
}

ParetoFrontier pareto_frontier(const std::vector<OperatingPoint>& points,
                               nlohmann::json provenance) {
  std::vector<ParetoPoint<std::size_t>> pts;
  pts.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    pts.push_back({points[i].dev_eval.eo, points[i].dev_eval.balanced_accuracy, i});
  }
  ParetoFrontier f;
  f.provenance = std::move(provenance);
  for (const auto& p : pareto_filter(pts)) f.points.push_back(points[p.payload]);
  return f;
}

Selection select_operating_point(const ParetoFrontier& frontier, double eo_cap) {
  if (frontier.points.empty()) throw InvalidArgument("cannot select from an empty frontier");
  // Total orders so the choice never depends on the input order.
  const auto by_accuracy = [](const OperatingPoint& a, const OperatingPoint& b) {
    return std::make_tuple(-a.dev_eval.balanced_accuracy, a.dev_eval.eo, eps_key(a), a.threshold) <
           std::make_tuple(-b.dev_eval.balanced_accuracy, b.dev_eval.eo, eps_key(b), b.threshold);
  };
  const auto by_eo = [](const OperatingPoint& a, const OperatingPoint& b) {
    return std::make_tuple(a.dev_eval.eo, -a.dev_eval.balanced_accuracy, eps_key(a), a.threshold) <
           std::make_tuple(b.dev_eval.eo, -b.dev_eval.balanced_accuracy, eps_key(b), b.threshold);
  };
  const OperatingPoint* best = nullptr;
  for (const auto& p : frontier.points) {
    if (p.dev_eval.eo <= eo_cap && (best == nullptr || by_accuracy(p, *best))) best = &p;
  }
  if (best != nullptr) return {*best, true};
  best = &*std::min_element(frontier.points.begin(), frontier.points.end(), by_eo);
  return {*best, false};
}

OperatingPoint evaluate_on_test(const OperatingPoint& op, const fst::Model* model,
                                const Calibrator& calibrator, const ScoredDataset& test,
                                const std::string& attribute, EoMode mode) {
  if (op.epsilon && model == nullptr) {
    throw InvalidArgument("operating point with epsilon " + std::to_string(*op.epsilon) +
                          " needs its FST model");
  }
  if (op.epsilon && model->epsilon != *op.epsilon) {
    throw InvalidArgument("FST model epsilon does not match the operating point");
  }
  const auto g = GroupedLabels::from(test, attribute);
  auto scores = pipeline_scores(test, calibrator, op.calibrated);
  if (op.epsilon) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = model->transform(scores[i], g.membership[i] == 1 ? 1 : 0);
    }
  }
  OperatingPoint out = op;
  out.test = report_at(g, scores, op.threshold, mode);
  return out;
}

std::string to_string(Method m) { return m == Method::fst ? "fst" : "tpp"; }

Method parse_method(const std::string& s) {
  if (s == "fst") return Method::fst;
  if (s == "tpp") return Method::tpp;
  throw InvalidArgument("unknown tuning method '" + s + "'");
}

TuningResult run_tuning(const TuningConfig& cfg, const ScoredDataset& dev,
                        const ScoredDataset& test) {
  if (!dev.has_attribute(cfg.attribute) || !test.has_attribute(cfg.attribute)) {
    throw InvalidArgument("attribute '" + cfg.attribute + "' missing from dev or test data");
  }
  const auto [dev_train, dev_eval] = split(dev, cfg.dev_split, cfg.seed);
  fst::Options opts = cfg.fst_options;
  opts.mode = cfg.mode;

  TuningResult res;
  const Calibrator identity = identity_calibrator();
  OperatingPoint base;
  base.threshold = 0.5;
  base.dev_eval = tpp_sweep(dev_eval, cfg.attribute, std::vector<double>{0.5}, cfg.mode).front().dev_eval;
  res.baseline = evaluate_on_test(base, nullptr, identity, test, cfg.attribute, cfg.mode);

  if (cfg.method == Method::fst) {
    res.grid = fst_grid(dev_train, dev_eval, cfg.attribute, cfg.epsilons, cfg.thresholds,
                        cfg.calibrate, opts);
    res.points = res.grid.points;
  } else {
    res.points = tpp_sweep(dev_eval, cfg.attribute, cfg.thresholds, cfg.mode);
  }

  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : res.grid.failures) {
    failures.push_back({{"epsilon", f.epsilon}, {"message", f.message}});
  }
  nlohmann::json prov = {
      {"method", to_string(cfg.method)},
      {"attribute", cfg.attribute},
      {"eo_mode", to_string(cfg.mode)},
      {"epsilons", cfg.method == Method::fst ? nlohmann::json(cfg.epsilons) : nlohmann::json::array()},
      {"thresholds", cfg.thresholds},
      {"calibrate", cfg.calibrate},
      {"eo_cap", cfg.eo_cap},
      {"seed", cfg.seed},
      {"dev_split", cfg.dev_split},
      {"sizes", {{"dev_train", dev_train.size()}, {"dev_eval", dev_eval.size()}, {"test", test.size()}}},
      {"digests", {{"dev", hex_digest(to_jsonl(dev))}, {"test", hex_digest(to_jsonl(test))}}},
      {"fit_failures", failures}};
  if (cfg.method == Method::fst) prov["solver"] = fst::to_string(opts.solver);

  res.frontier = pareto_frontier(res.points, std::move(prov));
  const Calibrator& cal = cfg.method == Method::fst ? res.grid.calibrator : identity;
  const auto test_eval = [&](const OperatingPoint& p) {
    const fst::Model* m = p.epsilon ? res.grid.model_for(*p.epsilon) : nullptr;
    return evaluate_on_test(p, m, cal, test, cfg.attribute, cfg.mode);
  };
  for (auto& p : res.frontier.points) p = test_eval(p);
  res.selected = select_operating_point(res.frontier, cfg.eo_cap);
  return res;
}

nlohmann::json to_json(const TuningResult& r, const TuningConfig& cfg) {
  nlohmann::json j;
  j["provenance"] = r.frontier.provenance;
  if (cfg.method == Method::fst) {
    j["calibrator"] = r.grid.calibrator;
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : r.grid.models) models.push_back(m);
    j["models"] = models;
  }
  j["baseline"] = r.baseline;
  j["points"] = r.points;
  j["frontier"] = r.frontier.points;
  j["selected"] = r.selected.point;
  j["selected_within_cap"] = r.selected.within_cap;
  return j;
}

}  // namespace fairpost::tuning
