#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fairpost/error.hpp"
#include "fairpost/report.hpp"
#include "oracles.hpp"

using namespace fairpost;
using namespace fairpost::report;

namespace {

RunSummary run(const std::string& model, std::int64_t seed, double fraction, double acc, double bacc,
               double eo_religion) {
  RunSummary r;
  r.model = model;
  r.seed = seed;
  r.fraction = fraction;
  r.accuracy = acc;
  r.balanced_accuracy = bacc;
  r.eo["religion"] = eo_religion;
  return r;
}

// 400 records; group members are r0..r159, subgroup "a" is r0..r119 and "b"
// r60..r159, so they overlap on r60..r119. "out" straddles the group edge.
ScoredDataset layered() {
  std::vector<SampleRecord> recs(400);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto& r = recs[i];
    r.id = "r" + std::to_string(i);
    r.label = (i * 7 % 5) < 2 ? 1 : 0;
    r.score = std::fmod(0.37 * static_cast<double>(i), 1.0);
    r.groups["religion"] = i < 160 ? 1 : 0;
    r.subgroups = std::map<std::string, int>{{"a", i < 120 ? 1 : 0},
                                             {"b", i >= 60 && i < 160 ? 1 : 0},
                                             {"out", i >= 100 && i < 220 ? 1 : 0},
                                             {"tiny", i < 30 ? 1 : 0}};
  }
  return ScoredDataset(recs, {"religion"});
}

}  // namespace

TEST(MeanSe, HandValues) {
  const std::vector<double> two{0.8, 0.9};
  const auto m = mean_se(two);
  EXPECT_NEAR(m.mean, 0.85, 1e-15);
  // sd = 0.0707..., se = sd / sqrt(2) = 0.05
  EXPECT_NEAR(m.se, 0.05, 1e-15);
  const std::vector<double> same{0.7, 0.7, 0.7};
  EXPECT_EQ(mean_se(same).se, 0.0);
  const std::vector<double> one{0.7};
  EXPECT_THROW(mean_se(one), InvalidArgument);
}

TEST(SeedSummary, DegenerateRunsExcluded) {
  const std::vector<RunSummary> runs{run("m", 1, 1.0, 0.9, 0.80, 0.10), run("m", 2, 1.0, 0.8, 0.50, 0.40),
                                     run("m", 3, 1.0, 0.7, 0.52, 0.40), run("m", 4, 1.0, 0.8, 0.70, 0.12)};
  const auto cells = seed_summary(runs);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].runs, 4u);
  EXPECT_EQ(cells[0].excluded, 2u);  // 0.52 is degenerate as well
  EXPECT_NEAR(cells[0].accuracy.mean, 0.85, 1e-15);
  EXPECT_NEAR(cells[0].balanced_accuracy.mean, 0.75, 1e-15);
  EXPECT_NEAR(cells[0].eo.at("religion").mean, 0.11, 1e-15);
  EXPECT_NEAR(cells[0].eo_spread.at("religion"), 0.02, 1e-15);
  EXPECT_FALSE(cells[0].spread_flag);
}

TEST(SeedSummary, SpreadFlagAndGrouping) {
  const std::vector<RunSummary> runs{run("b", 1, 0.5, 0.9, 0.8, 0.05), run("b", 2, 0.5, 0.9, 0.8, 0.20),
                                     run("a", 1, 1.0, 0.9, 0.8, 0.05), run("a", 2, 1.0, 0.9, 0.8, 0.06),
                                     run("a", 1, 0.2, 0.9, 0.8, 0.05), run("a", 2, 0.2, 0.9, 0.8, 0.06)};
  const auto cells = seed_summary(runs);
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[0].model, "a");
  EXPECT_EQ(cells[0].fraction, 0.2);
  EXPECT_EQ(cells[1].fraction, 1.0);
  EXPECT_EQ(cells[2].model, "b");
  EXPECT_FALSE(cells[0].spread_flag);
  EXPECT_TRUE(cells[2].spread_flag);  // spread 0.15 exactly
  const auto csv = to_csv(cells);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,fraction,runs,excluded,accuracy_mean,accuracy_se,balanced_accuracy_mean,"
            "balanced_accuracy_se,eo:religion_mean,eo:religion_se,eo:religion_spread,spread_flag");
}

TEST(SeedSummary, TooFewUsableRunsThrows) {
  const std::vector<RunSummary> runs{run("m", 1, 1.0, 0.9, 0.80, 0.1), run("m", 2, 1.0, 0.6, 0.50, 0.1)};
  try {
    seed_summary(runs);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("'m'"), std::string::npos);
  }
}

TEST(Subgroups, IdentityMitigationKeepsEo) {
  const auto ds = layered();
  const auto preds = threshold_predictions(ds.scores(), 0.5);
  const auto rows = subgroup_report(ds, preds, preds, "religion");
  ASSERT_EQ(rows.size(), 3u);  // coarse, a, b; "out" straddles, "tiny" too small
  EXPECT_EQ(rows[0].name, "religion");
  EXPECT_EQ(rows[0].n_test, 160u);
  EXPECT_EQ(rows[1].name, "a");
  EXPECT_EQ(rows[1].n_test, 120u);
  EXPECT_EQ(rows[2].name, "b");
  EXPECT_EQ(rows[2].n_test, 100u);
  for (const auto& r : rows) EXPECT_EQ(r.eo_before, r.eo_after) << r.name;
}

TEST(Subgroups, OverlappingSubgroupsMatchDirectMetric) {
  const auto ds = layered();
  const auto before = threshold_predictions(ds.scores(), 0.5);
  const auto after = threshold_predictions(ds.scores(), 0.35);
  const auto rows = subgroup_report(ds, before, after, "religion");
  const auto labels = [&] {
    std::vector<int> y;
    for (const auto& r : ds.records()) y.push_back(r.label);
    return y;
  }();
  for (const auto& row : rows) {
    std::vector<int> a;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& r = ds.records()[i];
      a.push_back(row.name == "religion" ? r.groups.at("religion") : r.subgroups->at(row.name));
    }
    EXPECT_NEAR(row.eo_before, oracle::eo(oracle::count(labels, before, a), false), 1e-12) << row.name;
    EXPECT_NEAR(row.eo_after, oracle::eo(oracle::count(labels, after, a), false), 1e-12) << row.name;
  }
  EXPECT_EQ(to_csv(rows).substr(0, 31), "name,n_test,eo_before,eo_after\n");
}

TEST(Subgroups, NoQualifyingSubgroupThrows) {
  const auto ds = layered();
  const auto preds = threshold_predictions(ds.scores(), 0.5);
  EXPECT_THROW(subgroup_report(ds, preds, preds, "religion", 500), InvalidArgument);
  const std::vector<int> short_preds(3, 0);
  EXPECT_THROW(subgroup_report(ds, short_preds, preds, "religion"), InvalidArgument);
}

TEST(Correlation, IdentityAndOracle) {
  std::vector<RunSummary> runs;
  for (int s = 0; s < 8; ++s) {
    auto r = run("m", s, 1.0, 0.7 + 0.01 * s, 0.6 + 0.013 * ((s * 5) % 8), 0.1 + 0.02 * ((s * 3) % 8));
    r.extra["f1"] = r.accuracy;
    runs.push_back(r);
  }
  const auto same = correlation_report(runs, "accuracy", "f1");
  EXPECT_EQ(same.rho, 1.0);
  EXPECT_EQ(same.p_value, 0.0);
  EXPECT_EQ(same.n, 8u);
  std::vector<double> xs, ys;
  for (const auto& r : runs) {
    xs.push_back(r.accuracy);
    ys.push_back(r.eo.at("religion"));
  }
  const auto c = correlation_report(runs, "accuracy", "eo:religion");
  const auto ref = oracle::pearson(xs, ys);
  EXPECT_NEAR(c.rho, ref.rho, 1e-12);
  EXPECT_NEAR(c.p_value, ref.p, 1e-10);
  EXPECT_THROW(correlation_report(runs, "accuracy", "eo:gender"), InvalidArgument);
  runs.resize(2);
  EXPECT_THROW(correlation_report(runs, "accuracy", "f1"), InvalidArgument);
}

TEST(RunsCsv, RoundTrip) {
  std::vector<RunSummary> runs{run("bert, base", 1, 0.5, 0.9, 0.8, 0.05), run("gpt2", -3, 1.0, 0.85, 0.75, 0.1)};
  runs[0].eo["gender"] = 0.07;
  runs[1].extra["f1"] = 0.66;
  const auto text = runs_to_csv(runs);
  std::istringstream in(text);
  const auto back = read_runs_csv(in);
  EXPECT_EQ(back, runs);
  EXPECT_EQ(runs_to_csv(back), text);
}

TEST(RunsCsv, ErrorsCarryLocation) {
  std::istringstream missing("model,seed,accuracy,balanced_accuracy\nm,1,0.9,0.8\n");
  EXPECT_THROW(read_runs_csv(missing, "runs.csv"), DataError);
  std::istringstream bad("model,seed,fraction,accuracy,balanced_accuracy\nm,1,1,0.9,0.8\nm,2,1,high,0.8\n");
  try {
    read_runs_csv(bad, "runs.csv");
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("runs.csv:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("accuracy"), std::string::npos) << msg;
  }
}
