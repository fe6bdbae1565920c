#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fairpost/dataset.hpp"
#include "fairpost/metrics.hpp"
#include "json.hpp"

namespace fairpost::report {

struct SubgroupRow {
  std::string name;
  std::size_t n_test = 0;
  double eo_before = 0.0;
  double eo_after = 0.0;

  bool operator==(const SubgroupRow&) const = default;
};

inline constexpr std::size_t kDefaultMinSamples = 100;

// Coarse group row first, then every subgroup lying inside the group with at
// least min_samples test members, sorted by name. Each EO compares the
// (sub)group with everyone outside it.
std::vector<SubgroupRow> subgroup_report(const ScoredDataset& test,
                                         std::span<const int> baseline_preds,
                                         std::span<const int> mitigated_preds,
                                         const std::string& attribute,
                                         std::size_t min_samples = kDefaultMinSamples,
                                         EoMode mode = EoMode::complement);

std::string to_csv(const std::vector<SubgroupRow>& rows);

struct RunSummary {
  std::string model;
  std::int64_t seed = 0;
  double fraction = 1.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::map<std::string, double> eo;     // attribute -> EO
  std::map<std::string, double> extra;  // any other numeric column

  bool operator==(const RunSummary&) const = default;
};

inline constexpr double kDegenerateBalancedAccuracy = 0.52;
inline constexpr double kSpreadFlag = 0.15;

// balanced accuracy <= 0.52: a collapsed, near-trivial predictor.
bool is_degenerate(const RunSummary& r);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(k)
};

MeanSe mean_se(std::span<const double> xs);

struct SeedCell {
  std::string model;
  double fraction = 1.0;
  std::size_t runs = 0;      // all runs in the cell
  std::size_t excluded = 0;  // degenerate runs left out of the aggregates
  MeanSe accuracy;
  MeanSe balanced_accuracy;
  std::map<std::string, MeanSe> eo;
  std::map<std::string, double> eo_spread;  // max - min over used runs
  bool spread_flag = false;                 // some spread >= 0.15
};

// One cell per (model, fraction), sorted by model then fraction. Throws when
// a cell keeps fewer than two usable runs.
std::vector<SeedCell> seed_summary(const std::vector<RunSummary>& runs);

std::string to_csv(const std::vector<SeedCell>& cells);

struct CorrelationResult {
  std::string x_field;
  std::string y_field;
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// Field names: accuracy, balanced_accuracy, fraction, seed, eo:<attribute>,
// or any extra column.
double run_field(const RunSummary& r, const std::string& field);

CorrelationResult correlation_report(const std::vector<RunSummary>& runs,
                                     const std::string& x_field, const std::string& y_field);

std::string to_csv(const CorrelationResult& c);

// Columns model,seed,fraction,accuracy,balanced_accuracy,eo:<attr>...; any
// other numeric column lands in `extra`.
std::vector<RunSummary> read_runs_csv(std::istream& in, const std::string& source = "<stream>");
std::string runs_to_csv(const std::vector<RunSummary>& runs);

}  // namespace fairpost::report
