#include <boost/math/special_functions/beta.hpp>
#include <boost/random/beta_distribution.hpp>
#include <cstdio>

#include "fairpost/dataset.hpp"
#include "fairpost/error.hpp"
#include "fairpost/numeric.hpp"

namespace fairpost {

namespace {

bool open_unit(double p) { return p > 0.0 && p < 1.0; }

// Scores of one label class that get reflected through 0.5 for the
// sensitive group: the band of probability mass |delta| adjacent to 0.5 on
// the side that moves predictions in the direction of delta.
struct ReflectBand {
  double lo = 0.5;
  double hi = 0.5;
  bool active = false;

  bool contains(double s) const { return active && s >= lo && s < hi; }
};

ReflectBand band_for(const BetaShape& shape, double delta, const char* what) {
  ReflectBand band;
  if (delta == 0.0) return band;
  const double below = boost::math::ibeta(shape.alpha, shape.beta, 0.5);
  band.active = true;
  if (delta > 0.0) {
    if (delta > below) {
      throw InvalidArgument(std::string("group_bias ") + what +
                            " exceeds the class mass below 0.5");
    }
    band.lo = boost::math::ibeta_inv(shape.alpha, shape.beta, below - delta);
    band.hi = 0.5;
  } else {
    if (below - delta > 1.0) {
      throw InvalidArgument(std::string("group_bias ") + what +
                            " exceeds the class mass above 0.5");
    }
    // (0.5, hi]: shift bounds by one ulp so contains() stays half-open.
    band.lo = std::nextafter(0.5, 1.0);
    band.hi = std::nextafter(boost::math::ibeta_inv(shape.alpha, shape.beta, below - delta), 2.0);
  }
  return band;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n == 0) throw InvalidArgument("synthetic n must be positive");
  if (!open_unit(positive_rate)) throw InvalidArgument("positive_rate must lie in (0,1)");
  if (!open_unit(group_rate)) throw InvalidArgument("group_rate must lie in (0,1)");
  for (const auto* s : {&negative_shape, &positive_shape}) {
    if (!(s->alpha > 0.0 && s->beta > 0.0)) {
      throw InvalidArgument("Beta shape parameters must be positive");
    }
  }
  if (attribute.empty()) throw InvalidArgument("attribute name must be non-empty");
  for (const auto& sg : subgroups) {
    if (sg.name.empty() || !open_unit(sg.rate)) {
      throw InvalidArgument("subgroup entries need a name and a rate in (0,1)");
    }
  }
  if (std::abs(group_bias[0]) >= 1.0 || std::abs(group_bias[1]) >= 1.0) {
    throw InvalidArgument("group_bias entries must lie in (-1,1)");
  }
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig cfg;
  try {
    if (j.contains("n")) cfg.n = j.at("n").get<std::size_t>();
    if (j.contains("positive_rate")) cfg.positive_rate = j.at("positive_rate").get<double>();
    if (j.contains("group_rate")) cfg.group_rate = j.at("group_rate").get<double>();
    if (j.contains("attribute")) cfg.attribute = j.at("attribute").get<std::string>();
    auto shape = [&](const char* key, BetaShape& out) {
      if (!j.contains(key)) return;
      const auto& a = j.at(key);
      out = {a.at(0).get<double>(), a.at(1).get<double>()};
    };
    shape("negative_shape", cfg.negative_shape);
    shape("positive_shape", cfg.positive_shape);
    if (j.contains("group_bias")) {
      cfg.group_bias = {j.at("group_bias").at(0).get<double>(),
                        j.at("group_bias").at(1).get<double>()};
    }
    if (j.contains("subgroups")) {
      for (const auto& s : j.at("subgroups")) {
        cfg.subgroups.push_back({s.at("name").get<std::string>(), s.at("rate").get<double>()});
      }
    }
    if (j.contains("emit_logits")) cfg.emit_logits = j.at("emit_logits").get<bool>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("synthetic config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const SyntheticConfig& cfg) {
  nlohmann::json j;
  j["n"] = cfg.n;
  j["positive_rate"] = cfg.positive_rate;
  j["group_rate"] = cfg.group_rate;
  j["attribute"] = cfg.attribute;
  j["negative_shape"] = {cfg.negative_shape.alpha, cfg.negative_shape.beta};
  j["positive_shape"] = {cfg.positive_shape.alpha, cfg.positive_shape.beta};
  j["group_bias"] = {cfg.group_bias[0], cfg.group_bias[1]};
  j["subgroups"] = nlohmann::json::array();
  for (const auto& s : cfg.subgroups) j["subgroups"].push_back({{"name", s.name}, {"rate", s.rate}});
  j["emit_logits"] = cfg.emit_logits;
  j["seed"] = cfg.seed;
  return j;
}

ScoredDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  // group_bias = (delta_tpr, delta_fpr): positives carry the TPR shift,
  // negatives the FPR shift.
  const ReflectBand neg_band = band_for(cfg.negative_shape, cfg.group_bias[1], "delta_fpr");
  const ReflectBand pos_band = band_for(cfg.positive_shape, cfg.group_bias[0], "delta_tpr");

  Rng rng(cfg.seed);
  boost::random::beta_distribution<double> neg_dist(cfg.negative_shape.alpha,
                                                    cfg.negative_shape.beta);
  boost::random::beta_distribution<double> pos_dist(cfg.positive_shape.alpha,
                                                    cfg.positive_shape.beta);

  const int width = static_cast<int>(std::to_string(cfg.n - 1).size());
  std::vector<SampleRecord> records;
  records.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    SampleRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "s%0*zu", width, i);
    r.id = id;
    r.label = uniform01(rng) < cfg.positive_rate ? 1 : 0;
    const int member = uniform01(rng) < cfg.group_rate ? 1 : 0;
    double s = r.label == 1 ? pos_dist(rng) : neg_dist(rng);
    if (member == 1) {
      const auto& band = r.label == 1 ? pos_band : neg_band;
      if (band.contains(s)) s = 1.0 - s;
    }
    r.score = s;
    r.groups[cfg.attribute] = member;
    if (!cfg.subgroups.empty()) {
      r.subgroups.emplace();
      for (const auto& sg : cfg.subgroups) {
        const bool tagged = uniform01(rng) < sg.rate;
        (*r.subgroups)[sg.name] = (member == 1 && tagged) ? 1 : 0;
      }
    }
    if (cfg.emit_logits) {
      const double z = logit(std::clamp(s, 1e-12, 1.0 - 1e-12));
      r.logits = std::array<double, 2>{-0.5 * z, 0.5 * z};
    }
    records.push_back(std::move(r));
  }
  return ScoredDataset(std::move(records), {cfg.attribute});
}

}  // namespace fairpost
