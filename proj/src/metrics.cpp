#include "fairpost/metrics.hpp"

#include <boost/math/special_functions/beta.hpp>

#include "fairpost/error.hpp"
#include "fairpost/numeric.hpp"

namespace fairpost {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

void tally(ConfusionCounts& c, int label, int pred) {
  if (label == 1) {
    (pred == 1 ? c.tp : c.fn) += 1;
  } else {
    (pred == 1 ? c.fp : c.tn) += 1;
  }
}

std::string reference_name(const std::string& group, EoMode mode) {
  return mode == EoMode::complement ? "complement of '" + group + "'" : "overall population";
}

const ConfusionCounts& reference(const GroupConfusion& c, EoMode mode) {
  return mode == EoMode::complement ? c.complement : c.overall;
}

// Conditional score means for one population, keyed by label class.
struct ClassMeans {
  CompensatedSum sum[2];
  CompensatedSum weight[2];

  double mean(int y, const std::string& who) const {
    const double w = weight[y].value();
    if (!(w > 0.0)) {
      throw DegenerateGroupError(who + " has no samples with label " + std::to_string(y) +
                                 (y == 1 ? " (positive)" : " (negative)"));
    }
    return sum[y].value() / w;
  }
};

}  // namespace

std::string to_string(EoMode mode) {
  return mode == EoMode::complement ? "complement" : "overall";
}

EoMode parse_eo_mode(const std::string& s) {
  if (s == "complement") return EoMode::complement;
  if (s == "overall") return EoMode::overall;
  throw InvalidArgument("unknown eo mode '" + s + "'");
}

GroupedLabels GroupedLabels::from(const ScoredDataset& ds, const std::string& attribute,
                                  MissingMembership policy) {
  return {attribute, ds.labels(), ds.membership(attribute, policy)};
}

GroupedLabels GroupedLabels::from_subgroup(const ScoredDataset& ds, const std::string& subgroup) {
  return {subgroup, ds.labels(), ds.subgroup_membership(subgroup)};
}

std::vector<int> threshold_predictions(std::span<const double> scores, double threshold) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(s >= threshold ? 1 : 0);
  return out;
}

GroupConfusion confusion(const GroupedLabels& g, std::span<const int> predictions) {
  check_lengths(g.labels.size(), predictions.size(), "confusion");
  check_lengths(g.labels.size(), g.membership.size(), "confusion");
  GroupConfusion out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int a = g.membership[i];
    if (a == kExcluded) continue;
    tally(a == 1 ? out.sensitive : out.complement, g.labels[i], predictions[i]);
    tally(out.overall, g.labels[i], predictions[i]);
  }
  return out;
}

GroupConfusion confusion(const ScoredDataset& ds, std::span<const int> predictions,
                         const std::string& attribute) {
  return confusion(GroupedLabels::from(ds, attribute), predictions);
}

double true_positive_rate(const ConfusionCounts& c, const std::string& group_name) {
  if (c.positives() == 0) {
    throw DegenerateGroupError(group_name + " has no samples with label 1 (positive)");
  }
  return static_cast<double>(c.tp) / static_cast<double>(c.positives());
}

double false_positive_rate(const ConfusionCounts& c, const std::string& group_name) {
  if (c.negatives() == 0) {
    throw DegenerateGroupError(group_name + " has no samples with label 0 (negative)");
  }
  return static_cast<double>(c.fp) / static_cast<double>(c.negatives());
}

RateGaps rate_gaps(const GroupConfusion& c, EoMode mode, const std::string& group_name) {
  const std::string sens = "group '" + group_name + "'";
  const std::string ref = reference_name(group_name, mode);
  const auto& r = reference(c, mode);
  return {true_positive_rate(c.sensitive, sens), true_positive_rate(r, ref),
          false_positive_rate(c.sensitive, sens), false_positive_rate(r, ref)};
}

double equalized_odds(const GroupedLabels& g, std::span<const int> predictions, EoMode mode) {
  const auto gaps = rate_gaps(confusion(g, predictions), mode, g.group_name);
  return std::max(gaps.tpr_gap(), gaps.fpr_gap());
}

double equalized_odds(const ScoredDataset& ds, std::span<const int> predictions,
                      const std::string& attribute, EoMode mode) {
  return equalized_odds(GroupedLabels::from(ds, attribute), predictions, mode);
}

double average_equalized_odds(const GroupedLabels& g, std::span<const int> predictions,
                              EoMode mode) {
  const auto gaps = rate_gaps(confusion(g, predictions), mode, g.group_name);
  return 0.5 * (gaps.tpr_gap() + gaps.fpr_gap());
}

double accuracy(std::span<const int> labels, std::span<const int> predictions) {
  check_lengths(labels.size(), predictions.size(), "accuracy");
  if (labels.empty()) throw InvalidArgument("accuracy of an empty sample");
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i] == predictions[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double balanced_accuracy(std::span<const int> labels, std::span<const int> predictions) {
  check_lengths(labels.size(), predictions.size(), "balanced_accuracy");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) tally(c, labels[i], predictions[i]);
  const double tpr = true_positive_rate(c, "overall population");
  const double tnr = 1.0 - false_positive_rate(c, "overall population");
  return 0.5 * (tpr + tnr);
}

double accuracy(const ScoredDataset& ds, std::span<const int> predictions) {
  return accuracy(ds.labels(), predictions);
}

double balanced_accuracy(const ScoredDataset& ds, std::span<const int> predictions) {
  return balanced_accuracy(ds.labels(), predictions);
}

double geo_difference(const GroupedLabels& g, std::span<const double> scores, EoMode mode) {
  check_lengths(g.labels.size(), scores.size(), "geo_difference");
  check_lengths(g.labels.size(), g.membership.size(), "geo_difference");
  ClassMeans sens, comp, all;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int a = g.membership[i];
    if (a == kExcluded) continue;
    const int y = g.labels[i];
    auto& m = a == 1 ? sens : comp;
    m.sum[y] += scores[i];
    m.weight[y] += 1.0;
    all.sum[y] += scores[i];
    all.weight[y] += 1.0;
  }
  const auto& ref = mode == EoMode::complement ? comp : all;
  const std::string sname = "group '" + g.group_name + "'";
  const std::string rname = reference_name(g.group_name, mode);
  double worst = 0.0;
  for (int y = 0; y < 2; ++y) {
    worst = std::max(worst, std::abs(sens.mean(y, sname) - ref.mean(y, rname)));
  }
  return worst;
}

double geo_difference(const ScoredDataset& ds, std::span<const double> scores,
                      const std::string& attribute, EoMode mode) {
  return geo_difference(GroupedLabels::from(ds, attribute), scores, mode);
}

double expected_geo_difference(std::span<const int> membership,
                               std::span<const double> label_probs,
                               std::span<const double> scores, EoMode mode) {
  check_lengths(membership.size(), scores.size(), "expected_geo_difference");
  check_lengths(label_probs.size(), scores.size(), "expected_geo_difference");
  ClassMeans sens, comp, all;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int a = membership[i];
    if (a == kExcluded) continue;
    const double w[2] = {1.0 - label_probs[i], label_probs[i]};
    auto& m = a == 1 ? sens : comp;
    for (int y = 0; y < 2; ++y) {
      m.sum[y] += w[y] * scores[i];
      m.weight[y] += w[y];
      all.sum[y] += w[y] * scores[i];
      all.weight[y] += w[y];
    }
  }
  const auto& ref = mode == EoMode::complement ? comp : all;
  double worst = 0.0;
  for (int y = 0; y < 2; ++y) {
    worst = std::max(worst, std::abs(sens.mean(y, "sensitive group") -
                                     ref.mean(y, "reference population")));
  }
  return worst;
}

double statistical_parity_difference(const GroupedLabels& g, std::span<const int> predictions) {
  check_lengths(g.membership.size(), predictions.size(), "statistical_parity_difference");
  std::uint64_t n[2] = {0, 0};
  std::uint64_t pos[2] = {0, 0};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int a = g.membership[i];
    if (a == kExcluded) continue;
    ++n[a];
    pos[a] += predictions[i] == 1;
  }
  if (n[1] == 0) throw DegenerateGroupError("group '" + g.group_name + "' is empty");
  if (n[0] == 0) throw DegenerateGroupError("complement of '" + g.group_name + "' is empty");
  return static_cast<double>(pos[1]) / static_cast<double>(n[1]) -
         static_cast<double>(pos[0]) / static_cast<double>(n[0]);
}

double statistical_parity_difference(const ScoredDataset& ds, std::span<const int> predictions,
                                     const std::string& attribute) {
  return statistical_parity_difference(GroupedLabels::from(ds, attribute), predictions);
}

FairnessReport fairness_report(const GroupedLabels& g, std::span<const double> scores,
                               std::span<const int> predictions, EoMode mode) {
  const auto c = confusion(g, predictions);
  const std::string sname = "group '" + g.group_name + "'";
  const std::string cname = "complement of '" + g.group_name + "'";
  FairnessReport r;
  r.eo_mode = mode;
  r.tpr = {true_positive_rate(c.sensitive, sname), true_positive_rate(c.complement, cname),
           true_positive_rate(c.overall, "overall population")};
  r.fpr = {false_positive_rate(c.sensitive, sname), false_positive_rate(c.complement, cname),
           false_positive_rate(c.overall, "overall population")};
  const double ref_tpr = mode == EoMode::complement ? r.tpr.complement : r.tpr.overall;
  const double ref_fpr = mode == EoMode::complement ? r.fpr.complement : r.fpr.overall;
  const double dtpr = std::abs(r.tpr.sensitive - ref_tpr);
  const double dfpr = std::abs(r.fpr.sensitive - ref_fpr);
  r.eo = std::max(dtpr, dfpr);
  r.avg_eo = 0.5 * (dtpr + dfpr);
  const auto n = c.overall.total();
  r.accuracy = static_cast<double>(c.overall.tp + c.overall.tn) / static_cast<double>(n);
  r.balanced_accuracy = 0.5 * (r.tpr.overall + 1.0 - r.fpr.overall);
  r.geo = geo_difference(g, scores, mode);
  r.spd = statistical_parity_difference(g, predictions);
  return r;
}

FairnessReport fairness_report(const ScoredDataset& ds, std::span<const double> scores,
                               double threshold, const std::string& attribute, EoMode mode) {
  const auto preds = threshold_predictions(scores, threshold);
  return fairness_report(GroupedLabels::from(ds, attribute), scores, preds, mode);
}

void to_json(nlohmann::json& j, const FairnessReport& r) {
  auto rates = [](const GroupRates& g) {
    return nlohmann::json{{"sensitive", g.sensitive}, {"complement", g.complement},
                          {"overall", g.overall}};
  };
  j = nlohmann::json{{"accuracy", r.accuracy},
                     {"balanced_accuracy", r.balanced_accuracy},
                     {"tpr", rates(r.tpr)},
                     {"fpr", rates(r.fpr)},
                     {"eo", r.eo},
                     {"avg_eo", r.avg_eo},
                     {"geo", r.geo},
                     {"spd", r.spd},
                     {"eo_mode", to_string(r.eo_mode)}};
}

void from_json(const nlohmann::json& j, FairnessReport& r) {
  auto rates = [](const nlohmann::json& g) {
    return GroupRates{g.at("sensitive").get<double>(), g.at("complement").get<double>(),
                      g.at("overall").get<double>()};
  };
  r.accuracy = j.at("accuracy").get<double>();
  r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
  r.tpr = rates(j.at("tpr"));
  r.fpr = rates(j.at("fpr"));
  r.eo = j.at("eo").get<double>();
  r.avg_eo = j.at("avg_eo").get<double>();
  r.geo = j.at("geo").get<double>();
  r.spd = j.at("spd").get<double>();
  r.eo_mode = parse_eo_mode(j.at("eo_mode").get<std::string>());
}

PearsonResult pearson(std::span<const double> xs, std::span<const double> ys) {
  check_lengths(xs.size(), ys.size(), "pearson");
  const std::size_t n = xs.size();
  if (n < 3) throw InvalidArgument("pearson needs at least 3 pairs");
  const double mx = compensated_sum(xs) / static_cast<double>(n);
  const double my = compensated_sum(ys) / static_cast<double>(n);
  CompensatedSum sxx, syy, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx.value() > 0.0) || !(syy.value() > 0.0)) {
    throw InvalidArgument("pearson is undefined for a zero-variance vector");
  }
  double rho = sxy.value() / std::sqrt(sxx.value() * syy.value());
  rho = std::clamp(rho, -1.0, 1.0);
  // With t^2 = r^2 (n-2) / (1-r^2), the two-sided tail P(|T| >= |t|) equals
  // I_x(df/2, 1/2) at x = df / (df + t^2) = 1 - r^2.
  const double df = static_cast<double>(n - 2);
  const double x = (1.0 - rho) * (1.0 + rho);
  const double p = x <= 0.0 ? 0.0 : boost::math::ibeta(0.5 * df, 0.5, x);
  return {rho, std::clamp(p, 0.0, 1.0), n};
}

std::vector<std::size_t> pareto_indices(std::span<const ParetoCoords> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].eo != points[b].eo) return points[a].eo < points[b].eo;
    return points[a].balanced_accuracy > points[b].balanced_accuracy;
  });
  std::vector<std::size_t> out;
  bool have_prev = false;
  double best_prev = 0.0;  // best balanced accuracy among strictly smaller eo
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    const double eo = points[order[i]].eo;
    while (j < order.size() && points[order[j]].eo == eo) ++j;
    // order[i] holds the best balanced accuracy of this eo block.
    const double block_best = points[order[i]].balanced_accuracy;
    if (!have_prev || block_best > best_prev) {
      for (std::size_t k = i; k < j && points[order[k]].balanced_accuracy == block_best; ++k) {
        out.push_back(order[k]);
      }
    }
    if (!have_prev || block_best > best_prev) best_prev = block_best;
    have_prev = true;
    i = j;
  }
  return out;
}

}  // namespace fairpost
