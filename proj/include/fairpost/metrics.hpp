#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairpost/dataset.hpp"
#include "json.hpp"

namespace fairpost {

// Which population the sensitive group is compared against.
enum class EoMode { complement, overall };

std::string to_string(EoMode mode);
EoMode parse_eo_mode(const std::string& s);

enum class Scope { sensitive, complement, overall };

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;
  Scope scope = Scope::overall;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  std::uint64_t positives() const { return tp + fn; }
  std::uint64_t negatives() const { return tn + fp; }
};

struct GroupConfusion {
  ConfusionCounts sensitive{.scope = Scope::sensitive};
  ConfusionCounts complement{.scope = Scope::complement};
  ConfusionCounts overall{.scope = Scope::overall};
};

// Labels plus 0/1/kExcluded membership of one attribute, the shape every
// group metric consumes.
struct GroupedLabels {
  std::string group_name;
  std::vector<int> labels;
  std::vector<int> membership;

  static GroupedLabels from(const ScoredDataset& ds, const std::string& attribute,
                            MissingMembership policy = MissingMembership::complement);
  static GroupedLabels from_subgroup(const ScoredDataset& ds, const std::string& subgroup);
};

std::vector<int> threshold_predictions(std::span<const double> scores, double threshold);

GroupConfusion confusion(const GroupedLabels& g, std::span<const int> predictions);
GroupConfusion confusion(const ScoredDataset& ds, std::span<const int> predictions,
                         const std::string& attribute);

// TPR/FPR with the degenerate-cell diagnostic.
double true_positive_rate(const ConfusionCounts& c, const std::string& group_name);
double false_positive_rate(const ConfusionCounts& c, const std::string& group_name);

struct RateGaps {
  double tpr_sensitive = 0.0;
  double tpr_reference = 0.0;
  double fpr_sensitive = 0.0;
  double fpr_reference = 0.0;

  double tpr_gap() const { return std::abs(tpr_sensitive - tpr_reference); }
  double fpr_gap() const { return std::abs(fpr_sensitive - fpr_reference); }
};

RateGaps rate_gaps(const GroupConfusion& c, EoMode mode, const std::string& group_name);

double equalized_odds(const GroupedLabels& g, std::span<const int> predictions,
                      EoMode mode = EoMode::complement);
double equalized_odds(const ScoredDataset& ds, std::span<const int> predictions,
                      const std::string& attribute, EoMode mode = EoMode::complement);
double average_equalized_odds(const GroupedLabels& g, std::span<const int> predictions,
                              EoMode mode = EoMode::complement);

double accuracy(std::span<const int> labels, std::span<const int> predictions);
double balanced_accuracy(std::span<const int> labels, std::span<const int> predictions);
double accuracy(const ScoredDataset& ds, std::span<const int> predictions);
double balanced_accuracy(const ScoredDataset& ds, std::span<const int> predictions);

// max over y of |mean(score | y, sensitive) - mean(score | y, reference)|.
double geo_difference(const GroupedLabels& g, std::span<const double> scores,
                      EoMode mode = EoMode::complement);
double geo_difference(const ScoredDataset& ds, std::span<const double> scores,
                      const std::string& attribute, EoMode mode = EoMode::complement);

// Same quantity with labels replaced by their probabilities: the mean for
// class y weights sample i by P(y_i = y) taken from `label_probs`.
double expected_geo_difference(std::span<const int> membership,
                               std::span<const double> label_probs,
                               std::span<const double> scores,
                               EoMode mode = EoMode::complement);

// mean(pred | sensitive) - mean(pred | complement).
double statistical_parity_difference(const GroupedLabels& g, std::span<const int> predictions);
double statistical_parity_difference(const ScoredDataset& ds, std::span<const int> predictions,
                                     const std::string& attribute);

struct GroupRates {
  double sensitive = 0.0;
  double complement = 0.0;
  double overall = 0.0;

  bool operator==(const GroupRates&) const = default;
};

struct FairnessReport {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  GroupRates tpr;
  GroupRates fpr;
  double eo = 0.0;
  double avg_eo = 0.0;
  double geo = 0.0;
  double spd = 0.0;
  EoMode eo_mode = EoMode::complement;

  bool operator==(const FairnessReport&) const = default;
};

void to_json(nlohmann::json& j, const FairnessReport& r);
void from_json(const nlohmann::json& j, FairnessReport& r);

// Full report for hard predictions; GEO is computed from `scores`.
FairnessReport fairness_report(const GroupedLabels& g, std::span<const double> scores,
                               std::span<const int> predictions,
                               EoMode mode = EoMode::complement);
FairnessReport fairness_report(const ScoredDataset& ds, std::span<const double> scores,
                               double threshold, const std::string& attribute,
                               EoMode mode = EoMode::complement);

struct PearsonResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// Sample correlation with the two-sided p-value of the t-statistic
// r*sqrt((n-2)/(1-r^2)) under n-2 degrees of freedom.
PearsonResult pearson(std::span<const double> xs, std::span<const double> ys);

struct ParetoCoords {
  double eo = 0.0;
  double balanced_accuracy = 0.0;
};

// Indices of non-dominated points (lower eo, higher balanced accuracy),
// sorted by eo ascending; exact duplicates are all kept.
std::vector<std::size_t> pareto_indices(std::span<const ParetoCoords> points);

template <typename Payload>
struct ParetoPoint {
  double eo = 0.0;
  double balanced_accuracy = 0.0;
  Payload payload{};
};

template <typename Payload>
std::vector<ParetoPoint<Payload>> pareto_filter(const std::vector<ParetoPoint<Payload>>& points) {
  std::vector<ParetoCoords> coords;
  coords.reserve(points.size());
  for (const auto& p : points) coords.push_back({p.eo, p.balanced_accuracy});
  std::vector<ParetoPoint<Payload>> out;
  for (auto i : pareto_indices(coords)) out.push_back(points[i]);
  return out;
}

}  // namespace fairpost
