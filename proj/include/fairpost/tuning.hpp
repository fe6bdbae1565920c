#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairpost/calibrate.hpp"
#include "fairpost/dataset.hpp"
#include "fairpost/fst.hpp"
#include "fairpost/metrics.hpp"
#include "json.hpp"

namespace fairpost::tuning {

struct OperatingPoint {
  std::optional<double> epsilon;  // none: threshold post-processing only
  double threshold = 0.5;
  bool calibrated = false;
  FairnessReport dev_eval;
  std::optional<FairnessReport> test;

  bool operator==(const OperatingPoint&) const = default;
};

void to_json(nlohmann::json& j, const OperatingPoint& p);
void from_json(const nlohmann::json& j, OperatingPoint& p);

std::vector<double> default_epsilons();    // {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}
std::vector<double> default_thresholds();  // 0.05, 0.10, ..., 0.95

// One point per threshold; prediction = score >= t.
std::vector<OperatingPoint> tpp_sweep(const ScoredDataset& dev_eval, const std::string& attribute,
                                      std::span<const double> thresholds,
                                      EoMode mode = EoMode::complement);

struct FitFailure {
  double epsilon = 0.0;
  std::string message;
};

struct FstGrid {
  std::vector<OperatingPoint> points;  // epsilon-major, threshold-minor
  std::vector<fst::Model> models;      // one per successfully fitted epsilon
  std::vector<FitFailure> failures;
  Calibrator calibrator;  // identity when uncalibrated

  const fst::Model* model_for(double epsilon) const;
};

// For each epsilon fit FST on dev_train, then transform and threshold the
// dev_eval scores at every t. With `calibrate`, a logistic calibrator fitted
// on dev_train maps logits to scores on both splits first.
FstGrid fst_grid(const ScoredDataset& dev_train, const ScoredDataset& dev_eval,
                 const std::string& attribute, std::span<const double> epsilons,
                 std::span<const double> thresholds, bool calibrate,
                 const fst::Options& opts = {});

struct ParetoFrontier {
  std::vector<OperatingPoint> points;  // eo ascending, mutually non-dominated
  nlohmann::json provenance = nlohmann::json::object();
};

ParetoFrontier pareto_frontier(const std::vector<OperatingPoint>& points,
                               nlohmann::json provenance = nlohmann::json::object());

struct Selection {
  OperatingPoint point;
  bool within_cap = true;  // false: no point met the cap, min-EO fallback
};

// Best dev-eval balanced accuracy among points with dev-eval EO <= eo_cap;
// the minimum-EO point (flagged) if none qualifies. Throws on an empty
// frontier.
Selection select_operating_point(const ParetoFrontier& frontier, double eo_cap);

// Scores a record set the way the tuning pipeline does: calibrated when the
// point is calibrated, the stored score otherwise.
std::vector<double> pipeline_scores(const ScoredDataset& ds, const Calibrator& calibrator,
                                    bool calibrated);

// Applies the frozen calibrator, FST model (required when the point has an
// epsilon) and threshold to `test` and fills the test report.
OperatingPoint evaluate_on_test(const OperatingPoint& op, const fst::Model* model,
                                const Calibrator& calibrator, const ScoredDataset& test,
                                const std::string& attribute, EoMode mode = EoMode::complement);

enum class Method { fst, tpp };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct TuningConfig {
  std::string attribute;
  Method method = Method::fst;
  std::vector<double> epsilons = default_epsilons();
  std::vector<double> thresholds = default_thresholds();
  bool calibrate = false;
  double eo_cap = 0.05;
  double dev_split = 0.5;  // dev-train share of the dev split
  std::uint64_t seed = 0;
  EoMode mode = EoMode::complement;
  fst::Options fst_options;
};

struct TuningResult {
  ParetoFrontier frontier;  // every point carries test metrics
  Selection selected;
  OperatingPoint baseline;  // t = 0.5 on raw scores, dev-eval and test
  std::vector<OperatingPoint> points;  // full dev-eval point cloud
  FstGrid grid;                        // FST only
};

// dev -> (dev-train, dev-eval) split, sweep, frontier on dev-eval, selection
// under eo_cap, and test evaluation of every frontier point.
TuningResult run_tuning(const TuningConfig& cfg, const ScoredDataset& dev,
                        const ScoredDataset& test);

nlohmann::json to_json(const TuningResult& r, const TuningConfig& cfg);

}  // namespace fairpost::tuning
