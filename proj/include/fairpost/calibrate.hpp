#pragma once

#include <array>
#include <string>

#include "fairpost/dataset.hpp"
#include "json.hpp"

namespace fairpost {

enum class CalibratorKind { logistic, linear_clip, identity };

std::string to_string(CalibratorKind kind);
CalibratorKind parse_calibrator_kind(const std::string& s);

struct CalibrationDiagnostics {
  int iterations = 0;
  double gradient_norm = 0.0;  // max-norm of the mean log-likelihood gradient
  bool converged = true;
  // Weight norm hit the cap: labels are (nearly) separable by the logits.
  bool separated = false;

  bool operator==(const CalibrationDiagnostics&) const = default;
};

/// Maps the two logits of a record to a probability:
///   logistic     sigmoid(w . logits + b)
///   linear_clip  clip(w . logits + b, 0, 1)
///   identity     softmax of the logits, or the stored score if none
struct Calibrator {
  CalibratorKind kind = CalibratorKind::identity;
  std::array<double, 2> weights{-1.0, 1.0};
  double bias = 0.0;
  CalibrationDiagnostics diagnostics;

  double apply(const std::array<double, 2>& logits) const;
  // Throws DataError if the record lacks what this calibrator needs.
  double apply(const SampleRecord& r) const;

  bool operator==(const Calibrator&) const = default;
};

inline constexpr int kLogisticMaxIterations = 100;
inline constexpr double kLogisticGradientTol = 1e-8;
inline constexpr double kLogisticWeightCap = 1e3;

// Maximum-likelihood logistic regression of the label on the logits, by
// damped Newton with step halving.
Calibrator fit_logistic(const ScoredDataset& ds);
// Ordinary least squares of the label on the logits; throws for a
// rank-deficient design.
Calibrator fit_linear_clip(const ScoredDataset& ds);
Calibrator identity_calibrator();
Calibrator fit_calibrator(const ScoredDataset& ds, CalibratorKind kind);

// Copy of `ds` whose score field holds the calibrated probability.
ScoredDataset apply(const Calibrator& c, const ScoredDataset& ds);

void to_json(nlohmann::json& j, const Calibrator& c);
void from_json(const nlohmann::json& j, Calibrator& c);

}  // namespace fairpost
