#include <gtest/gtest.h>

#include <random>

#include "fairpost/error.hpp"
#include "fairpost/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fairpost;

namespace {

// 10 records: group members r0..r3.
//   group:      y = 1 1 0 0,  yhat = 1 0 1 0
//   complement: y = 1 1 1 0 0 0, yhat = 1 1 0 0 0 1
const std::vector<int> kLabels{1, 1, 0, 0, 1, 1, 1, 0, 0, 0};
const std::vector<int> kPreds{1, 0, 1, 0, 1, 1, 0, 0, 0, 1};
const std::vector<int> kGroup{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
const std::vector<double> kScores{0.9, 0.4, 0.7, 0.2, 0.8, 0.6, 0.3, 0.1, 0.2, 0.55};

}  // namespace

TEST(Confusion, HandCounts) {
  const auto ds = fixture::make(kLabels, kScores, kGroup);
  const auto c = confusion(ds, kPreds, "g");
  EXPECT_EQ(c.sensitive.tp, 1u);
  EXPECT_EQ(c.sensitive.fn, 1u);
  EXPECT_EQ(c.sensitive.fp, 1u);
  EXPECT_EQ(c.sensitive.tn, 1u);
  EXPECT_EQ(c.complement.tp, 2u);
  EXPECT_EQ(c.complement.fn, 1u);
  EXPECT_EQ(c.complement.fp, 1u);
  EXPECT_EQ(c.complement.tn, 2u);
  EXPECT_EQ(c.overall.total(), 10u);
}

TEST(EqualizedOdds, HandValues) {
  const auto ds = fixture::make(kLabels, kScores, kGroup);
  // TPR 1/2 vs 2/3, FPR 1/2 vs 1/3.
  EXPECT_DOUBLE_EQ(equalized_odds(ds, kPreds, "g"), 1.0 / 6.0);
  // Overall: TPR 3/5, FPR 2/5 -> gaps 0.1 and 0.1.
  EXPECT_NEAR(equalized_odds(ds, kPreds, "g", EoMode::overall), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(balanced_accuracy(ds, kPreds), 0.5 * (3.0 / 5.0 + 3.0 / 5.0));
  EXPECT_DOUBLE_EQ(accuracy(ds, kPreds), 0.6);
  EXPECT_DOUBLE_EQ(statistical_parity_difference(ds, kPreds, "g"), 0.5 - 0.5);
}

TEST(EqualizedOdds, PerfectPredictorIsZero) {
  const auto ds = fixture::make(kLabels, kScores, kGroup);
  EXPECT_EQ(equalized_odds(ds, kLabels, "g"), 0.0);
}

TEST(EqualizedOdds, MatchesCountingOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto inst = fixture::random_instance(rng, 8 + rep % 40);
    const auto ds = fixture::make(inst.labels, inst.scores, inst.membership);
    const double t = 0.2 + 0.6 * u(rng);
    const auto preds = threshold_predictions(inst.scores, t);
    const auto c = oracle::count(inst.labels, preds, inst.membership);
    for (bool overall : {false, true}) {
      const auto mode = overall ? EoMode::overall : EoMode::complement;
      const auto r = fairness_report(ds, inst.scores, t, "g", mode);
      EXPECT_NEAR(r.eo, oracle::eo(c, overall), 1e-12);
      EXPECT_NEAR(r.avg_eo, oracle::avg_eo(c, overall), 1e-12);
      EXPECT_NEAR(r.geo, oracle::geo(inst.labels, inst.scores, inst.membership, overall), 1e-12);
    }
    const auto r = fairness_report(ds, inst.scores, t, "g");
    EXPECT_NEAR(r.balanced_accuracy, oracle::balanced_accuracy(c), 1e-12);
    EXPECT_NEAR(r.spd, oracle::spd(c), 1e-12);
  }
}

TEST(EqualizedOdds, EmptyCellNamesGroupAndClass) {
  // No positives in the group.
  const auto ds = fixture::make({0, 0, 1, 0}, {0.1, 0.2, 0.9, 0.3}, {1, 1, 0, 0});
  try {
    equalized_odds(ds, std::vector<int>{0, 0, 1, 0}, "g");
    FAIL() << "expected DegenerateGroupError";
  } catch (const DegenerateGroupError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'g'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("positive"), std::string::npos) << msg;
  }
}

TEST(Thresholding, InclusiveAtThreshold) {
  const std::vector<double> s{0.5, 0.49999999, 0.7};
  EXPECT_EQ(threshold_predictions(s, 0.5), (std::vector<int>{1, 0, 1}));
}

TEST(Membership, MissingAnnotationPolicies) {
  // r4 carries no annotation.
  const auto ds = fixture::make({1, 0, 1, 0, 1, 0}, {0.9, 0.1, 0.8, 0.6, 0.2, 0.3}, {1, 1, 0, 0, -1, 0});
  const auto as_complement = GroupedLabels::from(ds, "g", MissingMembership::complement);
  const auto excluded = GroupedLabels::from(ds, "g", MissingMembership::exclude);
  EXPECT_EQ(as_complement.membership[4], 0);
  EXPECT_EQ(excluded.membership[4], kExcluded);
  const std::vector<int> preds{1, 0, 1, 1, 0, 0};
  // Complement positives: r2 (hit), r4 (miss) vs r2 only.
  EXPECT_DOUBLE_EQ(equalized_odds(as_complement, preds), 0.5);
  EXPECT_DOUBLE_EQ(equalized_odds(excluded, preds), 0.5);  // FPR gap 0.5 either way
  EXPECT_DOUBLE_EQ(average_equalized_odds(as_complement, preds), 0.5 * (0.5 + 0.5));
  EXPECT_DOUBLE_EQ(average_equalized_odds(excluded, preds), 0.5 * (0.0 + 0.5));
}

TEST(Geo, SoftLabelsReduceToHardLabels) {
  std::mt19937_64 rng(9);
  const auto inst = fixture::random_instance(rng, 30);
  std::vector<double> probs(inst.labels.begin(), inst.labels.end());
  GroupedLabels g{"g", inst.labels, inst.membership};
  EXPECT_NEAR(expected_geo_difference(inst.membership, probs, inst.scores),
              geo_difference(g, inst.scores), 1e-14);
}

TEST(Report, JsonRoundTrip) {
  const auto ds = fixture::make(kLabels, kScores, kGroup);
  const auto r = fairness_report(ds, kScores, 0.5, "g", EoMode::overall);
  const nlohmann::json j = r;
  EXPECT_EQ(j.get<FairnessReport>(), r);
  EXPECT_EQ(j.at("eo_mode"), "overall");
}

TEST(Pearson, MatchesHighPrecisionOracle) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 3 + rep * 7;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back(z(rng));
      ys.push_back(0.3 * rep * xs.back() + z(rng));
    }
    const auto got = pearson(xs, ys);
    const auto ref = oracle::pearson(xs, ys);
    EXPECT_NEAR(got.rho, ref.rho, 1e-12);
    EXPECT_NEAR(got.p_value, ref.p, 1e-10);
    EXPECT_LE(std::abs(got.p_value - ref.p), 1e-7 * ref.p) << "relative, n=" << n;
    EXPECT_EQ(got.n, n);
  }
}

TEST(Pearson, IdentityAndAntisymmetry) {
  const std::vector<double> xs{0.3, 1.7, -0.2, 4.1, 2.2, 0.9};
  const std::vector<double> ys{1.0, 0.1, 0.7, 2.5, -1.1, 0.4};
  std::vector<double> neg_ys;
  for (double y : ys) neg_ys.push_back(-y);
  const auto self = pearson(xs, xs);
  EXPECT_EQ(self.rho, 1.0);
  EXPECT_EQ(self.p_value, 0.0);
  const auto a = pearson(xs, ys);
  const auto b = pearson(xs, neg_ys);
  EXPECT_EQ(b.rho, -a.rho);
  EXPECT_EQ(b.p_value, a.p_value);
  EXPECT_EQ(pearson(ys, xs).rho, a.rho);
}

TEST(Pearson, RejectsDegenerateInput) {
  const std::vector<double> two{1.0, 2.0};
  EXPECT_THROW(pearson(two, two), InvalidArgument);
  const std::vector<double> flat{1.0, 1.0, 1.0};
  const std::vector<double> v{1.0, 2.0, 3.0};
  EXPECT_THROW(pearson(flat, v), InvalidArgument);
}

TEST(Pareto, MatchesDominanceOracle) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::uniform_real_distribution<double> fine(0.0, 1.0);
  for (int rep = 0; rep < 40; ++rep) {
    std::vector<ParetoCoords> pts;
    std::vector<std::array<double, 2>> raw;
    const int n = 1 + rep;
    for (int i = 0; i < n; ++i) {
      // Half the sets use a coarse lattice so ties and duplicates occur.
      const double e = rep % 2 ? coarse(rng) / 6.0 : fine(rng);
      const double b = rep % 2 ? coarse(rng) / 6.0 : fine(rng);
      pts.push_back({e, b});
      raw.push_back({e, b});
    }
    auto got = pareto_indices(pts);
    for (std::size_t k = 1; k < got.size(); ++k) {
      EXPECT_LE(pts[got[k - 1]].eo, pts[got[k]].eo);
    }
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, oracle::pareto(raw));
  }
}

TEST(Pareto, FilterCarriesPayload) {
  std::vector<ParetoPoint<std::string>> pts{{0.1, 0.7, "a"}, {0.2, 0.6, "dominated"}, {0.3, 0.9, "c"}};
  const auto f = pareto_filter(pts);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].payload, "a");
  EXPECT_EQ(f[1].payload, "c");
}
