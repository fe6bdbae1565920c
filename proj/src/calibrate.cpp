#include "fairpost/calibrate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fairpost/error.hpp"
#include "fairpost/numeric.hpp"

namespace fairpost {

namespace {

struct Design {
  Eigen::MatrixXd x;  // columns: logit0, logit1, 1
  Eigen::VectorXd y;
};

Design design_matrix(const ScoredDataset& ds) {
  if (ds.empty()) throw InvalidArgument("cannot fit a calibrator on an empty dataset");
  Design d{Eigen::MatrixXd(static_cast<Eigen::Index>(ds.size()), 3),
           Eigen::VectorXd(static_cast<Eigen::Index>(ds.size()))};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    if (!r.logits) throw DataError("record '" + r.id + "' has no logits");
    const auto row = static_cast<Eigen::Index>(i);
    d.x(row, 0) = (*r.logits)[0];
    d.x(row, 1) = (*r.logits)[1];
    d.x(row, 2) = 1.0;
    d.y(row) = r.label;
  }
  return d;
}

// Mean Bernoulli log-likelihood of y given eta = x . theta.
double mean_log_likelihood(const Design& d, const Eigen::Vector3d& theta) {
  const Eigen::VectorXd eta = d.x * theta;
  CompensatedSum ll;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta(i);
    // log(1 + exp(e)) without overflow
    const double softplus = std::max(e, 0.0) + std::log1p(std::exp(-std::abs(e)));
    ll += d.y(i) * e - softplus;
  }
  return ll.value() / static_cast<double>(eta.size());
}

}  // namespace

std::string to_string(CalibratorKind kind) {
  switch (kind) {
    case CalibratorKind::logistic: return "logistic";
    case CalibratorKind::linear_clip: return "linear-clip";
    case CalibratorKind::identity: return "identity";
  }
  return "identity";
}

CalibratorKind parse_calibrator_kind(const std::string& s) {
  if (s == "logistic") return CalibratorKind::logistic;
  if (s == "linear-clip" || s == "linear_clip") return CalibratorKind::linear_clip;
  if (s == "identity") return CalibratorKind::identity;
  throw InvalidArgument("unknown calibration method '" + s + "'");
}

double Calibrator::apply(const std::array<double, 2>& logits) const {
  const double eta = weights[0] * logits[0] + weights[1] * logits[1] + bias;
  switch (kind) {
    case CalibratorKind::logistic: return clamp_score(sigmoid(eta));
    case CalibratorKind::linear_clip: return std::clamp(eta, 0.0, 1.0);
    case CalibratorKind::identity: return sigmoid(logits[1] - logits[0]);
  }
  return 0.0;
}

double Calibrator::apply(const SampleRecord& r) const {
  if (r.logits) return apply(*r.logits);
  if (kind == CalibratorKind::identity && r.score) return *r.score;
  throw DataError("record '" + r.id + "' has no logits to calibrate");
}

Calibrator identity_calibrator() { return Calibrator{}; }

Calibrator fit_logistic(const ScoredDataset& ds) {
  const Design d = design_matrix(ds);
  const double positives = d.y.sum();
  if (positives == 0.0 || positives == static_cast<double>(d.y.size())) {
    throw InvalidArgument("logistic calibration needs both label classes");
  }
  const double n = static_cast<double>(d.y.size());

  Eigen::Vector3d theta = Eigen::Vector3d::Zero();
  double ll = mean_log_likelihood(d, theta);
  CalibrationDiagnostics diag;
  diag.converged = false;
  for (int it = 0; it < kLogisticMaxIterations; ++it) {
    const Eigen::VectorXd eta = d.x * theta;
    Eigen::VectorXd resid(eta.size());
    Eigen::VectorXd curv(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double p = sigmoid(eta(i));
      resid(i) = d.y(i) - p;
      curv(i) = p * (1.0 - p);
    }
    const Eigen::Vector3d grad = d.x.transpose() * resid / n;
    diag.iterations = it;
    diag.gradient_norm = grad.cwiseAbs().maxCoeff();
    if (diag.gradient_norm <= kLogisticGradientTol) {
      diag.converged = true;
      break;
    }
    const Eigen::Matrix3d info = d.x.transpose() * curv.asDiagonal() * d.x / n;
    // Minimum-norm Newton direction; collinear logits (e.g. l0 = -l1) leave
    // the information matrix singular but the fitted probabilities unique.
    const Eigen::Vector3d step = info.completeOrthogonalDecomposition().solve(grad);
    double t = 1.0;
    Eigen::Vector3d next = theta + step;
    double next_ll = mean_log_likelihood(d, next);
    while (!(next_ll >= ll) && t > 1e-10) {
      t *= 0.5;
      next = theta + t * step;
      next_ll = mean_log_likelihood(d, next);
    }
    if (!(next_ll >= ll)) break;  // no ascent possible at double precision
    theta = next;
    ll = next_ll;
    diag.iterations = it + 1;
    if (theta.head<2>().norm() > kLogisticWeightCap) {
      diag.separated = true;
      break;
    }
  }
  // A finite theta that classifies every sample strictly correctly can be
  // scaled up forever, so no finite maximizer exists.
  if (!diag.separated) {
    const Eigen::VectorXd eta = d.x * theta;
    bool all_correct = true;
    for (Eigen::Index i = 0; i < eta.size() && all_correct; ++i) {
      all_correct = d.y(i) == 1.0 ? eta(i) > 0.0 : eta(i) < 0.0;
    }
    diag.separated = all_correct;
  }
  Calibrator c;
  c.kind = CalibratorKind::logistic;
  c.weights = {theta(0), theta(1)};
  c.bias = theta(2);
  c.diagnostics = diag;
  return c;
}

Calibrator fit_linear_clip(const ScoredDataset& ds) {
  const Design d = design_matrix(ds);
  const Eigen::Matrix3d gram = d.x.transpose() * d.x;
  const Eigen::Vector3d rhs = d.x.transpose() * d.y;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(gram);
  if (lu.rank() < 3) {
    throw InvalidArgument("linear calibration: logits are collinear (rank-deficient design)");
  }
  const Eigen::Vector3d beta = lu.solve(rhs);
  Calibrator c;
  c.kind = CalibratorKind::linear_clip;
  c.weights = {beta(0), beta(1)};
  c.bias = beta(2);
  c.diagnostics.iterations = 1;
  c.diagnostics.gradient_norm = (d.x.transpose() * (d.y - d.x * beta)).cwiseAbs().maxCoeff() /
                                static_cast<double>(d.y.size());
  return c;
}

Calibrator fit_calibrator(const ScoredDataset& ds, CalibratorKind kind) {
  switch (kind) {
    case CalibratorKind::logistic: return fit_logistic(ds);
    case CalibratorKind::linear_clip: return fit_linear_clip(ds);
    case CalibratorKind::identity: return identity_calibrator();
  }
  return identity_calibrator();
}

ScoredDataset apply(const Calibrator& c, const ScoredDataset& ds) {
  std::vector<double> scores;
  scores.reserve(ds.size());
  for (const auto& r : ds.records()) scores.push_back(c.apply(r));
  return ds.with_scores(scores);
}

void to_json(nlohmann::json& j, const Calibrator& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"weights", {c.weights[0], c.weights[1]}},
                     {"bias", c.bias},
                     {"diagnostics",
                      {{"iterations", c.diagnostics.iterations},
                       {"gradient_norm", c.diagnostics.gradient_norm},
                       {"converged", c.diagnostics.converged},
                       {"separated", c.diagnostics.separated}}}};
}

void from_json(const nlohmann::json& j, Calibrator& c) {
  c.kind = parse_calibrator_kind(j.at("kind").get<std::string>());
  c.weights = {j.at("weights").at(0).get<double>(), j.at("weights").at(1).get<double>()};
  c.bias = j.at("bias").get<double>();
  c.diagnostics = {};
  if (j.contains("diagnostics")) {
    const auto& d = j.at("diagnostics");
    c.diagnostics.iterations = d.value("iterations", 0);
    c.diagnostics.gradient_norm = d.value("gradient_norm", 0.0);
    c.diagnostics.converged = d.value("converged", true);
    c.diagnostics.separated = d.value("separated", false);
  }
}

}  // namespace fairpost
