#include "fairpost/hps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fairpost/error.hpp"
#include "fairpost/numeric.hpp"

namespace fairpost::hps {

namespace {

using Vec4 = std::array<double, 4>;  // (p00, p01, p10, p11), index 2a + yhat

constexpr double kFeasTol = 1e-12;

Mixing to_mixing(const Vec4& x) { return {{{x[0], x[1]}, {x[2], x[3]}}}; }

// Rows of the two equality constraints TPR_0 - TPR_1 = 0, FPR_0 - FPR_1 = 0.
std::array<Vec4, 2> equality_rows(const BaseRates& b) {
  return {Vec4{1.0 - b.tpr[0], b.tpr[0], -(1.0 - b.tpr[1]), -b.tpr[1]},
          Vec4{1.0 - b.fpr[0], b.fpr[0], -(1.0 - b.fpr[1]), -b.fpr[1]}};
}

// Expected error = constant + objective . x.
Vec4 objective_row(const BaseRates& b) {
  Vec4 c{};
  for (int a = 0; a < 2; ++a) {
    const double pos = b.priors[1][a];
    const double neg = b.priors[0][a];
    // -pos * TPR_a + neg * FPR_a
    c[2 * a + 1] = -pos * b.tpr[a] + neg * b.fpr[a];
    c[2 * a + 0] = -pos * (1.0 - b.tpr[a]) + neg * (1.0 - b.fpr[a]);
  }
  return c;
}

double dot(const Vec4& a, const Vec4& b) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += a[i] * b[i];
  return s;
}

bool lex_less(const Vec4& a, const Vec4& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// Every basic point: fix a subset of coordinates at 0/1 and solve the
// equalities for the rest. Returns only points inside the box.
std::vector<Vec4> basic_points(const BaseRates& base) {
  const auto rows = equality_rows(base);
  std::vector<Vec4> out;
  for (int mask = 0; mask < 16; ++mask) {
    std::vector<int> fixed, free;
    for (int k = 0; k < 4; ++k) ((mask >> k) & 1 ? fixed : free).push_back(k);
    if (free.size() > 2) continue;
    const int nf = static_cast<int>(fixed.size());
    for (int bits = 0; bits < (1 << nf); ++bits) {
      Vec4 x{};
      for (int t = 0; t < nf; ++t) x[fixed[t]] = (bits >> t) & 1 ? 1.0 : 0.0;
      // Right-hand sides after moving the fixed part across.
      double rhs[2];
      for (int e = 0; e < 2; ++e) {
        rhs[e] = 0.0;
        for (int k : fixed) rhs[e] -= rows[e][k] * x[k];
      }
      bool ok = true;
      if (free.size() == 2) {
        const double a11 = rows[0][free[0]], a12 = rows[0][free[1]];
        const double a21 = rows[1][free[0]], a22 = rows[1][free[1]];
        const double det = a11 * a22 - a12 * a21;
        if (std::abs(det) <= 1e-14) continue;
        x[free[0]] = (rhs[0] * a22 - a12 * rhs[1]) / det;
        x[free[1]] = (a11 * rhs[1] - a21 * rhs[0]) / det;
      } else if (free.size() == 1) {
        const int k = free[0];
        const int e = std::abs(rows[0][k]) >= std::abs(rows[1][k]) ? 0 : 1;
        if (std::abs(rows[e][k]) <= 1e-14) continue;
        x[k] = rhs[e] / rows[e][k];
      }
      for (int e = 0; e < 2 && ok; ++e) ok = std::abs(dot(rows[e], x)) <= kFeasTol;
      for (int k = 0; k < 4 && ok; ++k) ok = x[k] >= -kFeasTol && x[k] <= 1.0 + kFeasTol;
      if (!ok) continue;
      for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
      out.push_back(x);
    }
  }
  return out;
}

}  // namespace

ExpectedRates expected_rates(const BaseRates& base, const Mixing& p) {
  ExpectedRates r;
  CompensatedSum err;
  for (int a = 0; a < 2; ++a) {
    r.tpr[a] = p[a][1] * base.tpr[a] + p[a][0] * (1.0 - base.tpr[a]);
    r.fpr[a] = p[a][1] * base.fpr[a] + p[a][0] * (1.0 - base.fpr[a]);
    err += base.priors[1][a] * (1.0 - r.tpr[a]);
    err += base.priors[0][a] * r.fpr[a];
  }
  r.error = err.value();
  return r;
}

Model Model::identity(const BaseRates& base) {
  Model m;
  m.p = {{{0.0, 1.0}, {0.0, 1.0}}};
  m.base = base;
  m.expected = expected_rates(base, m.p);
  return m;
}

BaseRates base_rates(const GroupedLabels& g, std::span<const int> predictions) {
  const auto c = confusion(g, predictions);
  const ConfusionCounts* cells[2] = {&c.complement, &c.sensitive};
  const double n = static_cast<double>(c.overall.total());
  BaseRates b;
  for (int a = 0; a < 2; ++a) {
    const auto& cc = *cells[a];
    const std::string who = a == 1 ? "group '" + g.group_name + "'"
                                   : "complement of '" + g.group_name + "'";
    b.tpr[a] = true_positive_rate(cc, who);
    b.fpr[a] = false_positive_rate(cc, who);
    b.priors[1][a] = static_cast<double>(cc.positives()) / n;
    b.priors[0][a] = static_cast<double>(cc.negatives()) / n;
  }
  return b;
}

Model fit(const BaseRates& base) {
  for (int a = 0; a < 2; ++a) {
    for (int y = 0; y < 2; ++y) {
      if (!(base.priors[y][a] > 0.0)) {
        throw DegenerateGroupError("HPS: empty (label " + std::to_string(y) + ", group " +
                                   std::to_string(a) + ") cell");
      }
    }
  }
  const auto candidates = basic_points(base);
  if (candidates.empty()) {
    throw Error("HPS: no feasible vertex; base rates tpr=(" + std::to_string(base.tpr[0]) + "," +
                std::to_string(base.tpr[1]) + ") fpr=(" + std::to_string(base.fpr[0]) + "," +
                std::to_string(base.fpr[1]) + ")");
  }
  const Vec4 c = objective_row(base);
  double best_obj = std::numeric_limits<double>::infinity();
  for (const auto& x : candidates) best_obj = std::min(best_obj, dot(c, x));
  const Vec4* best = nullptr;
  for (const auto& x : candidates) {
    if (dot(c, x) > best_obj + 1e-12) continue;
    if (best == nullptr || lex_less(x, *best)) best = &x;
  }
  Model m;
  m.p = to_mixing(*best);
  m.base = base;
  m.expected = expected_rates(base, m.p);
  return m;
}

Model fit(const ScoredDataset& ds, std::span<const int> predictions, const std::string& attribute) {
  Model m = fit(base_rates(GroupedLabels::from(ds, attribute), predictions));
  m.attribute = attribute;
  return m;
}

FairnessReport expected_report(const Model& m, EoMode mode) {
  const auto& b = m.base;
  const auto& e = m.expected;
  const double pos = b.priors[1][0] + b.priors[1][1];
  const double neg = b.priors[0][0] + b.priors[0][1];
  FairnessReport r;
  r.eo_mode = mode;
  r.tpr = {e.tpr[1], e.tpr[0], (b.priors[1][0] * e.tpr[0] + b.priors[1][1] * e.tpr[1]) / pos};
  r.fpr = {e.fpr[1], e.fpr[0], (b.priors[0][0] * e.fpr[0] + b.priors[0][1] * e.fpr[1]) / neg};
  const double ref_tpr = mode == EoMode::complement ? r.tpr.complement : r.tpr.overall;
  const double ref_fpr = mode == EoMode::complement ? r.fpr.complement : r.fpr.overall;
  const double dtpr = std::abs(r.tpr.sensitive - ref_tpr);
  const double dfpr = std::abs(r.fpr.sensitive - ref_fpr);
  r.eo = std::max(dtpr, dfpr);
  r.avg_eo = 0.5 * (dtpr + dfpr);
  r.geo = r.eo;
  r.accuracy = 1.0 - e.error;
  r.balanced_accuracy = 0.5 * (r.tpr.overall + 1.0 - r.fpr.overall);
  double rate[2];
  for (int a = 0; a < 2; ++a) {
    const double mass = b.priors[0][a] + b.priors[1][a];
    rate[a] = (b.priors[1][a] * e.tpr[a] + b.priors[0][a] * e.fpr[a]) / mass;
  }
  r.spd = rate[1] - rate[0];
  return r;
}

std::vector<int> apply(const Model& m, std::span<const int> predictions, std::span<const int> groups,
                       std::uint64_t seed) {
  if (predictions.size() != groups.size()) {
    throw InvalidArgument("HPS apply: predictions and groups differ in length");
  }
  Rng rng(seed);
  std::vector<int> out(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int a = groups[i];
    const int yhat = predictions[i];
    if (a != 0 && a != 1) throw InvalidArgument("HPS apply: unknown group value " + std::to_string(a));
    if (yhat != 0 && yhat != 1) throw InvalidArgument("HPS apply: predictions must be 0 or 1");
    out[i] = uniform01(rng) < m.p[a][yhat] ? 1 : 0;
  }
  return out;
}

void to_json(nlohmann::json& j, const Model& m) {
  j = nlohmann::json{
      {"attribute", m.attribute},
      {"threshold", m.threshold},
      {"p", m.p},
      {"base_rates",
       {{"tpr", m.base.tpr}, {"fpr", m.base.fpr}, {"priors", m.base.priors}}},
      {"expected", {{"tpr", m.expected.tpr}, {"fpr", m.expected.fpr}, {"error", m.expected.error}}}};
}

void from_json(const nlohmann::json& j, Model& m) {
  m.attribute = j.at("attribute").get<std::string>();
  m.threshold = j.at("threshold").get<double>();
  m.p = j.at("p").get<Mixing>();
  for (const auto& row : m.p) {
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("HPS model: probability outside [0,1]");
    }
  }
  const auto& b = j.at("base_rates");
  m.base.tpr = b.at("tpr").get<std::array<double, 2>>();
  m.base.fpr = b.at("fpr").get<std::array<double, 2>>();
  m.base.priors = b.at("priors").get<std::array<std::array<double, 2>, 2>>();
  m.expected = expected_rates(m.base, m.p);
}

}  // namespace fairpost::hps
