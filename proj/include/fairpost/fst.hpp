#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "fairpost/dataset.hpp"
#include "fairpost/error.hpp"
#include "fairpost/metrics.hpp"
#include "json.hpp"

namespace fairpost::fst {

/// Minimizer over s in (0,1) of  -r ln s - (1-r) ln(1-s) + mu s,
/// i.e. the root in (0,1) of  mu s^2 - (1+mu) s + r = 0.
/// Returns r exactly when mu == 0.
double primal_from_mu(double r, double mu);

/// Minimizer over s in (0,1) of  -r ln s - (1-r) ln(1-s) + (rho/2)(s - v)^2,
/// the unique root in (0,1) of the cubic
///   rho s^3 - rho (1+v) s^2 + (rho v - 1) s + r = 0.
/// Safeguarded Newton on the bracket (0,1) with bisection fallback.
double admm_cubic_step(double r, double v, double rho);

// Constraint index j = 2*y + (sign < 0): (y=0,+), (y=0,-), (y=1,+), (y=1,-).
inline constexpr int kNumConstraints = 4;
inline constexpr int constraint_label(int j) { return j / 2; }
inline constexpr double constraint_sign(int j) { return j % 2 == 0 ? 1.0 : -1.0; }

/// Group normalizers U[y][a] = sum over group a of u_i(y), with the
/// calibration-proxy weights u_i(1) = r_i, u_i(0) = 1 - r_i, plus the
/// population totals used by the group-vs-overall variant.
struct Normalizers {
  std::array<std::array<double, 2>, 2> by_group{};  // [y][a]
  std::array<double, 2> overall{};                  // [y]

  bool operator==(const Normalizers&) const = default;
};

/// Linear constraints  sum_i c_j(i) s_i <= epsilon  with
///   c_j(i) = sign_j * u_i(y_j) * d_{y_j}(a_i),
///   d_y(a) = [a=1]/U[y][1] - [a=0]/U[y][0]   (complement mode)
///   d_y(a) = [a=1]/U[y][1] - 1/U[y][all]     (overall mode).
/// Evaluated at s, the left side is sign_j times the u-weighted difference
/// of group means of s for label class y_j.
class ConstraintSystem {
 public:
  // `membership` entries are 0/1; `scores` must lie in (0,1).
  ConstraintSystem(std::span<const double> scores, std::span<const int> membership,
                   double epsilon, EoMode mode);

  static Normalizers normalizers_for(std::span<const double> scores,
                                     std::span<const int> membership);

  std::size_t size() const { return scores_.size(); }
  double epsilon() const { return epsilon_; }
  EoMode mode() const { return mode_; }
  const Normalizers& normalizers() const { return norm_; }
  std::span<const double> scores() const { return scores_; }
  std::span<const int> membership() const { return membership_; }

  // d_y(a).
  double group_factor(int y, int a) const { return factor_[y][a]; }
  double coefficient(int j, std::size_t i) const;
  // sum_i c_j(i) s_i for every j.
  std::array<double, kNumConstraints> constraint_values(std::span<const double> s) const;
  // max_j sum_i c_j(i) s_i: the proxy GEO difference of s.
  double proxy_geo(std::span<const double> s) const;

 private:
  std::vector<double> scores_;
  std::vector<int> membership_;
  double epsilon_;
  EoMode mode_;
  Normalizers norm_;
  std::array<std::array<double, 2>, 2> factor_{};  // [y][a]
};

enum class Solver { projected_gradient, admm };

std::string to_string(Solver s);
Solver parse_solver(const std::string& s);

struct Options {
  Solver solver = Solver::projected_gradient;
  EoMode mode = EoMode::complement;
  // Success needs max violation <= feasibility_tol together with either the
  // KKT residual below kkt_tol or a relative dual change below
  // relative_objective_tol.
  double feasibility_tol = 1e-3;
  double relative_objective_tol = 1e-9;
  double kkt_tol = 1e-8;
  double admm_kkt_tol = 1e-6;
  int max_iters = 10000;
  double admm_rho = 4.0;
};

struct Diagnostics {
  int iterations = 0;
  double max_violation = 0.0;  // max_j (constraint_j - epsilon), may be < 0
  double kkt_residual = 0.0;
  double dual_objective = 0.0;
  double baseline_geo = 0.0;  // proxy GEO of the untransformed scores
  double fitted_geo = 0.0;    // proxy GEO after the transform
  std::string solver;

  bool operator==(const Diagnostics&) const = default;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, Diagnostics diag) : Error(what), diagnostics_(std::move(diag)) {}
  const Diagnostics& diagnostics() const { return diagnostics_; }

 private:
  Diagnostics diagnostics_;
};

/// Fitted score transformation. Pure and immutable: the multipliers and
/// normalizers are frozen from the fit split.
struct Model {
  std::string attribute;
  EoMode mode = EoMode::complement;
  double epsilon = 0.0;
  std::array<double, kNumConstraints> lambdas{};
  Normalizers normalizers;
  Diagnostics diagnostics;

  // mu(r, a) = sum_j lambda_j c_j evaluated for a record with score r.
  double multiplier(double r, int a) const;
  // Clamps r into the open interval first; an all-zero multiplier model
  // returns r untouched.
  double transform(double r, int a) const;
  bool is_identity() const;

  bool operator==(const Model&) const = default;
};

// Fit on raw vectors; membership must be 0/1 for every sample.
Model fit_scores(std::span<const double> scores, std::span<const int> membership,
                 double epsilon, const Options& opts = {});

// Fit on a dataset with calibrated scores. Records without an annotation for
// `attribute` count as the complement.
Model fit(const ScoredDataset& ds, const std::string& attribute, double epsilon,
          const Options& opts = {});

// Scores of `ds` mapped through the model.
std::vector<double> transform_scores(const Model& m, const ScoredDataset& ds);
ScoredDataset apply(const Model& m, const ScoredDataset& ds);

// Cross-entropy objective sum_i [-r_i ln s_i - (1-r_i) ln(1-s_i)].
double cross_entropy(std::span<const double> r, std::span<const double> s);

// Dual function value and gradient at lambda for a constraint system, plus
// the primal minimizer. Exposed for gradient checks.
struct DualEvaluation {
  double value = 0.0;
  std::array<double, kNumConstraints> gradient{};
  std::vector<double> primal;
};
DualEvaluation evaluate_dual(const ConstraintSystem& sys,
                             const std::array<double, kNumConstraints>& lambdas);

void to_json(nlohmann::json& j, const Model& m);
void from_json(const nlohmann::json& j, Model& m);

}  // namespace fairpost::fst
