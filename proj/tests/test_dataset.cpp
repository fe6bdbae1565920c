#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fairpost/dataset.hpp"
#include "fairpost/error.hpp"
#include "fairpost/metrics.hpp"

using namespace fairpost;

namespace {

ScoredDataset small_mixed() {
  std::vector<SampleRecord> recs(3);
  recs[0].id = "a";
  recs[0].logits = std::array<double, 2>{-0.25, 1.5};
  recs[0].label = 1;
  recs[0].groups = {{"religion", 1}, {"gender", 0}};
  recs[0].subgroups = std::map<std::string, int>{{"muslim", 1}};
  recs[0].split = SplitTag::dev;
  recs[1].id = "b,with comma";
  recs[1].score = 0.1;
  recs[1].groups = {{"religion", 0}};
  recs[2].id = "c";
  recs[2].score = 1.0 / 3.0;
  recs[2].logits = std::array<double, 2>{0.0, -2.0};
  recs[2].label = 1;
  return ScoredDataset(recs, {"gender", "religion"});
}

ScoredDataset numbered(std::size_t n) {
  std::vector<SampleRecord> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    recs[i].id = "x" + std::to_string(i);
    recs[i].score = 0.5;
  }
  return ScoredDataset(recs, {});
}

std::set<std::string> ids(const ScoredDataset& ds) {
  std::set<std::string> out;
  for (const auto& r : ds.records()) out.insert(r.id);
  return out;
}

}  // namespace

TEST(Jsonl, RoundTrip) {
  const auto ds = small_mixed();
  std::istringstream in(to_jsonl(ds));
  const auto back = read_jsonl(in);
  EXPECT_EQ(back.records(), ds.records());
  EXPECT_EQ(to_jsonl(back), to_jsonl(ds));
}

TEST(Csv, RoundTrip) {
  const auto ds = small_mixed();
  std::istringstream in(to_csv(ds));
  const auto back = read_csv(in);
  EXPECT_EQ(back.records(), ds.records());
  EXPECT_EQ(to_csv(back), to_csv(ds));
}

TEST(Csv, HeaderUsesPrefixes) {
  const auto text = to_csv(small_mixed());
  const auto header = text.substr(0, text.find('\n'));
  EXPECT_EQ(header, "id,label,score,logit0,logit1,split,group:gender,group:religion,subgroup:muslim");
}

TEST(Jsonl, MalformedRowReportsLineAndField) {
  std::istringstream in(
      "{\"id\":\"a\",\"score\":0.2,\"label\":0,\"groups\":{}}\n"
      "\n"
      "{\"id\":\"b\",\"score\":0.2,\"label\":2,\"groups\":{}}\n");
  try {
    read_jsonl(in, "f.jsonl");
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("f.jsonl:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("label"), std::string::npos) << msg;
  }
}

TEST(Jsonl, MissingLogitsAndScoreRejected) {
  std::istringstream in("{\"id\":\"a\",\"label\":0,\"groups\":{}}\n");
  EXPECT_THROW(read_jsonl(in), DataError);
}

TEST(Csv, BadNumberReportsLine) {
  std::istringstream in("id,label,score\nx,1,0.5\ny,0,zero\n");
  try {
    read_csv(in, "f.csv");
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("f.csv:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("score"), std::string::npos) << msg;
  }
}

TEST(Format, UnknownRejected) {
  EXPECT_THROW(parse_file_format("parquet"), InvalidArgument);
  EXPECT_THROW(format_for_path("data.txt"), InvalidArgument);
  EXPECT_EQ(format_for_path("a/b.csv"), FileFormat::csv);
}

TEST(Dataset, DuplicateIdsRejected) {
  std::vector<SampleRecord> recs(2);
  recs[0].id = recs[1].id = "dup";
  recs[0].score = recs[1].score = 0.3;
  EXPECT_THROW(ScoredDataset(recs, {}), DataError);
}

TEST(Dataset, UnregisteredGroupRejected) {
  std::vector<SampleRecord> recs(1);
  recs[0].id = "a";
  recs[0].score = 0.3;
  recs[0].groups = {{"race", 1}};
  EXPECT_THROW(ScoredDataset(recs, {"religion"}), DataError);
}

TEST(Split, SizesFromContract) {
  const auto [a, b] = split(numbered(100), 0.8, 7);
  EXPECT_EQ(a.size(), 80u);
  EXPECT_EQ(b.size(), 20u);
}

TEST(Split, PartitionAndDeterminism) {
  const auto ds = numbered(37);
  const auto [a, b] = split(ds, 0.5, 3);
  EXPECT_EQ(a.size(), 19u);  // 18.5 rounds up
  auto ua = ids(a);
  const auto ub = ids(b);
  for (const auto& id : ub) EXPECT_EQ(ua.count(id), 0u);
  ua.insert(ub.begin(), ub.end());
  EXPECT_EQ(ua, ids(ds));
  const auto [a2, b2] = split(ds, 0.5, 3);
  EXPECT_EQ(a2, a);
  EXPECT_EQ(b2, b);
  const auto [a3, b3] = split(ds, 0.5, 4);
  EXPECT_NE(a3, a);
}

TEST(Subsample, NestedSets) {
  const auto ds = numbered(200);
  const std::vector<double> fr{0.2, 0.4, 1.0};
  const auto parts = subsample_nested(ds, fr, 11);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[0].size(), 40u);
  EXPECT_EQ(parts[1].size(), 80u);
  EXPECT_EQ(parts[2].size(), 200u);
  const auto big = ids(parts[1]);
  for (const auto& id : ids(parts[0])) EXPECT_EQ(big.count(id), 1u) << id;
  EXPECT_EQ(subsample_nested(ds, fr, 11)[0], parts[0]);
  const std::vector<double> bad{0.4, 0.2};
  EXPECT_THROW(subsample_nested(ds, bad, 1), InvalidArgument);
}

TEST(Synthetic, BitIdenticalForSameSeed) {
  SyntheticConfig cfg;
  cfg.n = 2000;
  cfg.seed = 42;
  cfg.group_bias = {-0.05, 0.1};
  cfg.subgroups = {{"a", 0.5}, {"b", 0.4}};
  EXPECT_EQ(to_jsonl(generate_synthetic(cfg)), to_jsonl(generate_synthetic(cfg)));
  auto other = cfg;
  other.seed = 43;
  EXPECT_NE(to_jsonl(generate_synthetic(other)), to_jsonl(generate_synthetic(cfg)));
}

TEST(Synthetic, PositiveRateWithinBinomialBounds) {
  SyntheticConfig cfg;
  cfg.n = 20000;
  cfg.seed = 3;
  const auto ds = generate_synthetic(cfg);
  ASSERT_EQ(ds.size(), cfg.n);
  double pos = 0.0;
  for (const auto& r : ds.records()) pos += r.label;
  const double sigma = std::sqrt(cfg.positive_rate * (1.0 - cfg.positive_rate) / cfg.n);
  EXPECT_LE(std::abs(pos / cfg.n - cfg.positive_rate), 3.0 * sigma);
}

TEST(Synthetic, LogitsAgreeWithScores) {
  SyntheticConfig cfg;
  cfg.n = 500;
  cfg.seed = 8;
  for (const auto& r : generate_synthetic(cfg).records()) {
    ASSERT_TRUE(r.logits && r.score);
    const double softmax = 1.0 / (1.0 + std::exp((*r.logits)[0] - (*r.logits)[1]));
    EXPECT_NEAR(softmax, *r.score, 1e-12);
  }
}

TEST(Synthetic, FprGapMatchesInjectedBias) {
  SyntheticConfig cfg;
  cfg.n = 20000;
  cfg.seed = 1;
  cfg.group_bias = {0.0, 0.2};
  const auto ds = generate_synthetic(cfg);
  const auto gap = [](const ScoredDataset& d, const std::string& attr) {
    const auto g = GroupedLabels::from(d, attr);
    const auto c = confusion(g, threshold_predictions(d.scores(), 0.5));
    return rate_gaps(c, EoMode::complement, attr);
  };
  // Monte-Carlo reference on ten times the sample.
  auto big = cfg;
  big.n = 200000;
  big.seed = 1001;
  const auto ref = gap(generate_synthetic(big), cfg.attribute);
  const auto got = gap(ds, cfg.attribute);
  EXPECT_NEAR(ref.fpr_sensitive - ref.fpr_reference, 0.2, 0.01);
  EXPECT_NEAR(got.fpr_sensitive - got.fpr_reference, 0.2, 0.03);
  EXPECT_NEAR(got.tpr_gap(), 0.0, 0.03);
}

TEST(Synthetic, SubgroupsInsideSensitiveGroup) {
  SyntheticConfig cfg;
  cfg.n = 3000;
  cfg.seed = 5;
  cfg.group_rate = 0.3;
  cfg.subgroups = {{"a", 0.6}, {"b", 0.5}};
  const auto ds = generate_synthetic(cfg);
  bool overlap = false;
  for (const auto& r : ds.records()) {
    if (!r.subgroups) continue;
    const bool a = r.subgroups->at("a") == 1, b = r.subgroups->at("b") == 1;
    if (a || b) EXPECT_EQ(r.groups.at(cfg.attribute), 1);
    overlap = overlap || (a && b);
  }
  EXPECT_TRUE(overlap);
}

TEST(Synthetic, ConfigJsonRoundTrip) {
  SyntheticConfig cfg;
  cfg.n = 123;
  cfg.group_bias = {0.1, -0.05};
  cfg.negative_shape = {2.0, 6.0};
  cfg.subgroups = {{"x", 0.25}};
  const auto back = synthetic_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
}
