#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairpost/dataset.hpp"
#include "fairpost/metrics.hpp"
#include "json.hpp"

namespace fairpost::hps {

using Mixing = std::array<std::array<double, 2>, 2>;  // [a][base prediction]

/// Rates of the base classifier on the fit data.
struct BaseRates {
  std::array<double, 2> tpr{};  // P(yhat=1 | y=1, a)
  std::array<double, 2> fpr{};  // P(yhat=1 | y=0, a)
  std::array<std::array<double, 2>, 2> priors{};  // joint P(y, a), indexed [y][a]

  bool operator==(const BaseRates&) const = default;
};

/// In-expectation performance of a mixing rule.
struct ExpectedRates {
  std::array<double, 2> tpr{};
  std::array<double, 2> fpr{};
  double error = 0.0;

  bool operator==(const ExpectedRates&) const = default;
};

ExpectedRates expected_rates(const BaseRates& base, const Mixing& p);

/// p[a][yhat] = probability the post-processed output is 1 for a sample in
/// group a whose base prediction is yhat.
struct Model {
  std::string attribute;
  double threshold = 0.5;
  Mixing p{};
  BaseRates base;
  ExpectedRates expected;

  static Model identity(const BaseRates& base);
  bool operator==(const Model&) const = default;
};

BaseRates base_rates(const GroupedLabels& g, std::span<const int> predictions);

// Exact LP solution by vertex enumeration: minimize expected 0-1 error
// subject to TPR_0 = TPR_1 and FPR_0 = FPR_1 over p in [0,1]^4. Ties are
// broken towards the lexicographically smallest (p00, p01, p10, p11).
Model fit(const BaseRates& base);
Model fit(const ScoredDataset& ds, std::span<const int> predictions,
          const std::string& attribute);

// Analytic report of the randomized classifier; GEO equals EO here since the
// mixing probability is the expected prediction.
FairnessReport expected_report(const Model& m, EoMode mode = EoMode::complement);

// One Bernoulli draw per sample, deterministic given the seed.
std::vector<int> apply(const Model& m, std::span<const int> predictions,
                       std::span<const int> groups, std::uint64_t seed);

void to_json(nlohmann::json& j, const Model& m);
void from_json(const nlohmann::json& j, Model& m);

}  // namespace fairpost::hps
