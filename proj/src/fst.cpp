#include "fairpost/fst.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "fairpost/numeric.hpp"

namespace fairpost::fst {

namespace {

using Lambdas = std::array<double, kNumConstraints>;
using Factors = std::array<std::array<double, 2>, 2>;  // [y][a]

constexpr double kOneMinusUlp = 1.0 - 0x1.0p-53;

void check_score(double r) {
  if (!(r > 0.0 && r < 1.0)) {
    throw InvalidArgument("score " + std::to_string(r) + " outside the open interval (0,1)");
  }
}

double keep_open(double s) {
  return std::clamp(s, std::numeric_limits<double>::min(), kOneMinusUlp);
}

Factors group_factors(const Normalizers& n, EoMode mode) {
  Factors f{};
  for (int y = 0; y < 2; ++y) {
    if (mode == EoMode::complement) {
      f[y][1] = 1.0 / n.by_group[y][1];
      f[y][0] = -1.0 / n.by_group[y][0];
    } else {
      f[y][1] = 1.0 / n.by_group[y][1] - 1.0 / n.overall[y];
      f[y][0] = -1.0 / n.overall[y];
    }
  }
  return f;
}

// Net multiplier per label class: theta_y = lambda_{y,+} - lambda_{y,-}.
std::array<double, 2> net_multipliers(const Lambdas& l) {
  return {l[0] - l[1], l[2] - l[3]};
}

double multiplier_for(const std::array<double, 2>& theta, const Factors& f, double r, int a) {
  return theta[0] * (1.0 - r) * f[0][a] + theta[1] * r * f[1][a];
}

// KL(r || s), the cross-entropy up to the constant entropy of r.
double kl_bernoulli(double r, double s) {
  return r * std::log(r / s) + (1.0 - r) * std::log((1.0 - r) / (1.0 - s));
}

// Group means differences G_y = sum_i u_i(y) d_y(a_i) s_i computed from
// per-cell sums to avoid cancellation.
std::array<double, 2> mean_differences(const std::array<std::array<CompensatedSum, 2>, 2>& cell,
                                       const Normalizers& n, EoMode mode) {
  std::array<double, 2> g{};
  for (int y = 0; y < 2; ++y) {
    const double s1 = cell[y][1].value();
    const double s0 = cell[y][0].value();
    const double mean1 = s1 / n.by_group[y][1];
    const double ref = mode == EoMode::complement ? s0 / n.by_group[y][0]
                                                  : (s0 + s1) / n.overall[y];
    g[y] = mean1 - ref;
  }
  return g;
}

Lambdas gradient_from(const std::array<double, 2>& g, double epsilon) {
  Lambdas grad{};
  for (int j = 0; j < kNumConstraints; ++j) {
    grad[j] = constraint_sign(j) * g[constraint_label(j)] - epsilon;
  }
  return grad;
}

struct Pass {
  double value = 0.0;
  Lambdas gradient{};
  std::array<double, 2> curvature{};  // diagonal of the negated dual Hessian, per y
};

// One sweep over the samples at fixed lambda. Writes the primal minimizer
// into `s` when non-null.
Pass dual_pass(const ConstraintSystem& sys, const Factors& f, const Lambdas& lambdas,
               std::vector<double>* s_out) {
  const auto theta = net_multipliers(lambdas);
  const auto r = sys.scores();
  const auto a = sys.membership();
  CompensatedSum value;
  std::array<std::array<CompensatedSum, 2>, 2> cell;
  std::array<CompensatedSum, 2> curv;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double ri = r[i];
    const int ai = a[i];
    const double mu = multiplier_for(theta, f, ri, ai);
    const double s = primal_from_mu(ri, mu);
    if (s_out) (*s_out)[i] = s;
    value += kl_bernoulli(ri, s) + mu * s;
    cell[0][ai] += (1.0 - ri) * s;
    cell[1][ai] += ri * s;
    const double ce2 = ri / (s * s) + (1.0 - ri) / ((1.0 - s) * (1.0 - s));
    const double c0 = (1.0 - ri) * f[0][ai];
    const double c1 = ri * f[1][ai];
    curv[0] += c0 * c0 / ce2;
    curv[1] += c1 * c1 / ce2;
  }
  Pass p;
  double lsum = 0.0;
  for (double l : lambdas) lsum += l;
  p.value = value.value() - sys.epsilon() * lsum;
  p.gradient = gradient_from(mean_differences(cell, sys.normalizers(), sys.mode()), sys.epsilon());
  p.curvature = {curv[0].value(), curv[1].value()};
  return p;
}

double max_violation(const Lambdas& grad) { return *std::max_element(grad.begin(), grad.end()); }

double kkt_residual(const Lambdas& lambdas, const Lambdas& grad) {
  double worst = 0.0;
  for (int j = 0; j < kNumConstraints; ++j) {
    const double res = lambdas[j] > 0.0 ? std::abs(grad[j]) : std::max(grad[j], 0.0);
    worst = std::max(worst, res);
  }
  return worst;
}

struct SolveResult {
  Lambdas lambdas{};
  Pass pass;
  int iterations = 0;
};

SolveResult solve_projected_gradient(const ConstraintSystem& sys, const Factors& f,
                                     const Options& opts, Diagnostics& diag) {
  SolveResult st;
  st.pass = dual_pass(sys, f, st.lambdas, nullptr);
  double rel_change = std::numeric_limits<double>::infinity();
  double t = 1.0;
  for (int it = 0; it <= opts.max_iters; ++it) {
    st.iterations = it;
    const double viol = max_violation(st.pass.gradient);
    const double kkt = kkt_residual(st.lambdas, st.pass.gradient);
    diag.kkt_residual = kkt;
    if (viol <= opts.feasibility_tol &&
        (kkt <= opts.kkt_tol || rel_change <= opts.relative_objective_tol)) {
      return st;
    }
    if (it == opts.max_iters) break;

    // Diagonally scaled ascent direction, projected onto lambda >= 0.
    Lambdas dir{};
    for (int j = 0; j < kNumConstraints; ++j) {
      const double h = st.pass.curvature[constraint_label(j)];
      dir[j] = st.pass.gradient[j] / (h > 0.0 ? h : 1.0);
    }
    t = std::min(1.0, 2.0 * t);
    bool accepted = false;
    while (t >= 1e-20) {
      Lambdas cand{};
      double predicted = 0.0;
      for (int j = 0; j < kNumConstraints; ++j) {
        cand[j] = std::max(0.0, st.lambdas[j] + t * dir[j]);
        predicted += st.pass.gradient[j] * (cand[j] - st.lambdas[j]);
      }
      Pass next = dual_pass(sys, f, cand, nullptr);
      if (next.value >= st.pass.value + 1e-4 * predicted) {
        rel_change = std::abs(next.value - st.pass.value) /
                     std::max(std::abs(next.value), std::numeric_limits<double>::min());
        st.lambdas = cand;
        st.pass = next;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No ascent left at double precision.
      if (max_violation(st.pass.gradient) <= opts.feasibility_tol) return st;
      break;
    }
  }
  diag.iterations = st.iterations;
  diag.max_violation = max_violation(st.pass.gradient);
  diag.dual_objective = st.pass.value;
  throw FitError("FST projected-gradient solver did not converge", diag);
}

// Projection of x onto {z : |A_y z| <= eps, y = 0,1} where A_y z is the
// weighted mean difference. Returns the net multipliers nu with
// z = x - sum_y nu_y a_y.
std::array<double, 2> project_slabs(const std::array<double, 2>& b, const Eigen::Matrix2d& gram,
                                    double eps) {
  std::array<double, 2> best{0.0, 0.0};
  double best_score = std::numeric_limits<double>::infinity();
  const double tol = 1e-12 * (1.0 + std::abs(b[0]) + std::abs(b[1]));
  for (int s0 = -1; s0 <= 1; ++s0) {
    for (int s1 = -1; s1 <= 1; ++s1) {
      const int sign[2] = {s0, s1};
      std::array<double, 2> nu{0.0, 0.0};
      if (s0 != 0 && s1 != 0) {
        Eigen::Vector2d rhs(b[0] - s0 * eps, b[1] - s1 * eps);
        const double det = gram.determinant();
        if (std::abs(det) <= 1e-300) continue;
        Eigen::Vector2d sol = gram.inverse() * rhs;
        nu = {sol(0), sol(1)};
      } else if (s0 != 0 || s1 != 0) {
        const int y = s0 != 0 ? 0 : 1;
        if (!(gram(y, y) > 0.0)) continue;
        nu[y] = (b[y] - sign[y] * eps) / gram(y, y);
      }
      // Primal feasibility and dual sign conditions; the score measures how
      // badly they fail so a rounding-level miss still picks the right set.
      double miss = 0.0;
      for (int y = 0; y < 2; ++y) {
        const double az = b[y] - gram(y, 0) * nu[0] - gram(y, 1) * nu[1];
        if (sign[y] == 0) {
          miss = std::max(miss, std::abs(az) - eps);
        } else {
          miss = std::max(miss, -sign[y] * nu[y] * gram(y, y));
        }
      }
      if (miss <= tol) return nu;
      if (miss < best_score) {
        best_score = miss;
        best = nu;
      }
    }
  }
  return best;
}

SolveResult solve_admm(const ConstraintSystem& sys, const Factors& f, const Options& opts,
                       Diagnostics& diag) {
  const auto r = sys.scores();
  const auto a = sys.membership();
  const std::size_t n = r.size();
  std::vector<double> coef0(n), coef1(n);
  CompensatedSum g00, g01, g11;
  for (std::size_t i = 0; i < n; ++i) {
    coef0[i] = (1.0 - r[i]) * f[0][a[i]];
    coef1[i] = r[i] * f[1][a[i]];
    g00 += coef0[i] * coef0[i];
    g01 += coef0[i] * coef1[i];
    g11 += coef1[i] * coef1[i];
  }
  Eigen::Matrix2d gram;
  gram << g00.value(), g01.value(), g01.value(), g11.value();

  std::vector<double> s(r.begin(), r.end());
  std::vector<double> z(s);
  std::vector<double> w(n, 0.0);
  double rho = opts.admm_rho;
  std::array<double, 2> nu{0.0, 0.0};

  SolveResult st;
  st.pass = dual_pass(sys, f, st.lambdas, nullptr);
  double prev_value = st.pass.value;
  for (int it = 0; it <= opts.max_iters; ++it) {
    st.iterations = it;
    if (it % 10 == 0) {
      const double viol = max_violation(st.pass.gradient);
      const double kkt = kkt_residual(st.lambdas, st.pass.gradient);
      diag.kkt_residual = kkt;
      const double rel = std::abs(st.pass.value - prev_value) /
                         std::max(std::abs(st.pass.value), std::numeric_limits<double>::min());
      if (viol <= opts.feasibility_tol &&
          (kkt <= opts.admm_kkt_tol || (it > 0 && rel <= opts.relative_objective_tol))) {
        return st;
      }
    }
    if (it == opts.max_iters) break;

    // Separable step: one cubic per sample.
    CompensatedSum b0, b1;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = admm_cubic_step(r[i], z[i] - w[i], rho);
      const double x = s[i] + w[i];
      b0 += coef0[i] * x;
      b1 += coef1[i] * x;
    }
    nu = project_slabs({b0.value(), b1.value()}, gram, sys.epsilon());
    CompensatedSum primal_res, dual_res;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = s[i] + w[i];
      const double znew = x - nu[0] * coef0[i] - nu[1] * coef1[i];
      dual_res += (znew - z[i]) * (znew - z[i]);
      z[i] = znew;
      w[i] += s[i] - z[i];
      primal_res += (s[i] - z[i]) * (s[i] - z[i]);
    }

    const std::array<double, 2> theta{rho * nu[0], rho * nu[1]};
    if ((it + 1) % 10 == 0) {
      prev_value = st.pass.value;
      st.lambdas = {std::max(0.0, theta[0]), std::max(0.0, -theta[0]), std::max(0.0, theta[1]),
                    std::max(0.0, -theta[1])};
      st.pass = dual_pass(sys, f, st.lambdas, nullptr);

      // Residual balancing.
      const double rp = std::sqrt(primal_res.value());
      const double rd = rho * std::sqrt(dual_res.value());
      if (rp > 10.0 * rd) {
        rho *= 2.0;
        for (auto& wi : w) wi *= 0.5;
      } else if (rd > 10.0 * rp) {
        rho *= 0.5;
        for (auto& wi : w) wi *= 2.0;
      }
    }
  }
  diag.iterations = st.iterations;
  diag.max_violation = max_violation(st.pass.gradient);
  diag.dual_objective = st.pass.value;
  throw FitError("FST ADMM solver did not converge", diag);
}

}  // namespace

double primal_from_mu(double r, double mu) {
  check_score(r);
  if (mu == 0.0) return r;
  const double b = 1.0 + mu;
  // Discriminant (1+mu)^2 - 4 mu r written as a sum of nonnegative terms.
  const double disc = mu > 0.0 ? (mu - 1.0) * (mu - 1.0) + 4.0 * mu * (1.0 - r)
                               : b * b - 4.0 * mu * r;
  const double root = std::sqrt(disc);
  // Pick the cancellation-free form of the root lying in (0,1).
  const double s = b >= 0.0 ? 2.0 * r / (b + root) : (b - root) / (2.0 * mu);
  return keep_open(s);
}

double admm_cubic_step(double r, double v, double rho) {
  check_score(r);
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw InvalidArgument("ADMM penalty rho must be positive and finite");
  }
  if (!std::isfinite(v)) throw InvalidArgument("ADMM target v must be finite");
  // h(s) = (s - r) + rho (s - v) s (1 - s): h(0) = -r < 0 < 1 - r = h(1), and
  // h has the sign of the strictly increasing objective derivative on (0,1).
  auto h = [&](double s) { return (s - r) + rho * (s - v) * s * (1.0 - s); };
  auto dh = [&](double s) { return 1.0 + rho * (s * (1.0 - s) + (s - v) * (1.0 - 2.0 * s)); };

  double lo = 0.0;
  double hi = 1.0;
  // Start from one Newton step on the objective taken at s = r.
  const double q = rho * r * (1.0 - r);
  double s = (r + q * std::clamp(v, 0.0, 1.0)) / (1.0 + q);
  if (!(s > lo && s < hi)) s = 0.5;
  for (int it = 0; it < 200; ++it) {
    const double hs = h(s);
    if (hs == 0.0) return s;
    if (hs < 0.0) lo = s; else hi = s;
    const double d = dh(s);
    double next = d > 0.0 ? s - hs / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - s);
    s = next;
    if (step <= 1e-12 * std::max(s, 1e-3) || hi - lo <= 1e-15 * std::max(s, 1e-300)) break;
  }
  return keep_open(s);
}

std::string to_string(Solver s) {
  return s == Solver::projected_gradient ? "pgd" : "admm";
}

Solver parse_solver(const std::string& s) {
  if (s == "pgd" || s == "projected_gradient") return Solver::projected_gradient;
  if (s == "admm") return Solver::admm;
  throw InvalidArgument("unknown FST solver '" + s + "'");
}

Normalizers ConstraintSystem::normalizers_for(std::span<const double> scores,
                                              std::span<const int> membership) {
  std::array<std::array<CompensatedSum, 2>, 2> u;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int a = membership[i];
    u[0][a] += 1.0 - scores[i];
    u[1][a] += scores[i];
  }
  Normalizers n;
  for (int y = 0; y < 2; ++y) {
    for (int a = 0; a < 2; ++a) n.by_group[y][a] = u[y][a].value();
    CompensatedSum total;
    total += u[y][0].value();
    total += u[y][1].value();
    n.overall[y] = total.value();
  }
  return n;
}

ConstraintSystem::ConstraintSystem(std::span<const double> scores, std::span<const int> membership,
                                   double epsilon, EoMode mode)
    : scores_(scores.begin(), scores.end()),
      membership_(membership.begin(), membership.end()),
      epsilon_(epsilon),
      mode_(mode) {
  if (scores.size() != membership.size()) {
    throw InvalidArgument("FST: scores and membership differ in length");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("FST epsilon must be positive");
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    check_score(scores_[i]);
    if (membership_[i] != 0 && membership_[i] != 1) {
      throw InvalidArgument("FST: membership values must be 0 or 1");
    }
  }
  norm_ = normalizers_for(scores_, membership_);
  for (int y = 0; y < 2; ++y) {
    for (int a = 0; a < 2; ++a) {
      if (!(norm_.by_group[y][a] > 0.0)) {
        throw DegenerateGroupError(std::string("FST: ") +
                                   (a == 1 ? "sensitive group" : "complement") +
                                   " has no weight for label " + std::to_string(y));
      }
    }
  }
  factor_ = group_factors(norm_, mode_);
}

double ConstraintSystem::coefficient(int j, std::size_t i) const {
  const int y = constraint_label(j);
  const double u = y == 1 ? scores_[i] : 1.0 - scores_[i];
  return constraint_sign(j) * u * factor_[y][membership_[i]];
}

std::array<double, kNumConstraints> ConstraintSystem::constraint_values(
    std::span<const double> s) const {
  if (s.size() != scores_.size()) throw InvalidArgument("FST: score vector length mismatch");
  std::array<std::array<CompensatedSum, 2>, 2> cell;
  for (std::size_t i = 0; i < s.size(); ++i) {
    cell[0][membership_[i]] += (1.0 - scores_[i]) * s[i];
    cell[1][membership_[i]] += scores_[i] * s[i];
  }
  const auto g = mean_differences(cell, norm_, mode_);
  std::array<double, kNumConstraints> out{};
  for (int j = 0; j < kNumConstraints; ++j) out[j] = constraint_sign(j) * g[constraint_label(j)];
  return out;
}

double ConstraintSystem::proxy_geo(std::span<const double> s) const {
  const auto v = constraint_values(s);
  return *std::max_element(v.begin(), v.end());
}

DualEvaluation evaluate_dual(const ConstraintSystem& sys, const Lambdas& lambdas) {
  DualEvaluation out;
  out.primal.resize(sys.size());
  const auto f = group_factors(sys.normalizers(), sys.mode());
  const auto p = dual_pass(sys, f, lambdas, &out.primal);
  out.value = p.value;
  out.gradient = p.gradient;
  return out;
}

double Model::multiplier(double r, int a) const {
  if (a != 0 && a != 1) throw InvalidArgument("FST: group membership must be 0 or 1");
  return multiplier_for(net_multipliers(lambdas), group_factors(normalizers, mode),
                        clamp_score(r), a);
}

double Model::transform(double r, int a) const {
  if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("FST: score outside [0,1]");
  if (is_identity()) return r;
  const double rc = clamp_score(r);
  return primal_from_mu(rc, multiplier(rc, a));
}

bool Model::is_identity() const {
  return std::all_of(lambdas.begin(), lambdas.end(), [](double l) { return l == 0.0; });
}

Model fit_scores(std::span<const double> scores, std::span<const int> membership, double epsilon,
                 const Options& opts) {
  std::vector<double> r(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
      throw InvalidArgument("FST: score outside [0,1]");
    }
    r[i] = clamp_score(scores[i]);
  }
  const ConstraintSystem sys(r, membership, epsilon, opts.mode);
  const auto f = group_factors(sys.normalizers(), sys.mode());

  Diagnostics diag;
  diag.solver = to_string(opts.solver);
  diag.baseline_geo = sys.proxy_geo(r);
  const SolveResult st = opts.solver == Solver::projected_gradient
                             ? solve_projected_gradient(sys, f, opts, diag)
                             : solve_admm(sys, f, opts, diag);

  Model m;
  m.mode = opts.mode;
  m.epsilon = epsilon;
  m.lambdas = st.lambdas;
  m.normalizers = sys.normalizers();
  diag.iterations = st.iterations;
  diag.max_violation = max_violation(st.pass.gradient);
  diag.kkt_residual = kkt_residual(st.lambdas, st.pass.gradient);
  diag.dual_objective = st.pass.value;
  diag.fitted_geo = diag.max_violation + epsilon;
  m.diagnostics = diag;
  return m;
}

Model fit(const ScoredDataset& ds, const std::string& attribute, double epsilon,
          const Options& opts) {
  const auto scores = ds.scores();
  const auto membership = ds.membership(attribute, MissingMembership::complement);
  Model m = fit_scores(scores, membership, epsilon, opts);
  m.attribute = attribute;
  return m;
}

std::vector<double> transform_scores(const Model& m, const ScoredDataset& ds) {
  const auto membership = ds.membership(m.attribute, MissingMembership::complement);
  std::vector<double> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    if (!r.score) throw DataError("record '" + r.id + "' has no score to transform");
    out.push_back(m.transform(*r.score, membership[i]));
  }
  return out;
}

ScoredDataset apply(const Model& m, const ScoredDataset& ds) {
  return ds.with_scores(transform_scores(m, ds));
}

double cross_entropy(std::span<const double> r, std::span<const double> s) {
  if (r.size() != s.size()) throw InvalidArgument("cross_entropy: length mismatch");
  CompensatedSum ce;
  for (std::size_t i = 0; i < r.size(); ++i) {
    ce += -r[i] * std::log(s[i]) - (1.0 - r[i]) * std::log1p(-s[i]);
  }
  return ce.value();
}

void to_json(nlohmann::json& j, const Model& m) {
  const auto& n = m.normalizers;
  const auto& d = m.diagnostics;
  j = nlohmann::json{
      {"attribute", m.attribute},
      {"eo_mode", to_string(m.mode)},
      {"epsilon", m.epsilon},
      {"lambdas", m.lambdas},
      {"normalizers",
       {{"by_group", {{n.by_group[0][0], n.by_group[0][1]}, {n.by_group[1][0], n.by_group[1][1]}}},
        {"overall", {n.overall[0], n.overall[1]}}}},
      {"diagnostics",
       {{"iterations", d.iterations},
        {"max_violation", d.max_violation},
        {"kkt_residual", d.kkt_residual},
        {"dual_objective", d.dual_objective},
        {"baseline_geo", d.baseline_geo},
        {"fitted_geo", d.fitted_geo},
        {"solver", d.solver}}}};
}

void from_json(const nlohmann::json& j, Model& m) {
  m.attribute = j.at("attribute").get<std::string>();
  m.mode = parse_eo_mode(j.at("eo_mode").get<std::string>());
  m.epsilon = j.at("epsilon").get<double>();
  m.lambdas = j.at("lambdas").get<Lambdas>();
  for (double l : m.lambdas) {
    if (!(l >= 0.0)) throw InvalidArgument("FST model: negative multiplier");
  }
  const auto& n = j.at("normalizers");
  for (int y = 0; y < 2; ++y) {
    for (int a = 0; a < 2; ++a) m.normalizers.by_group[y][a] = n.at("by_group").at(y).at(a).get<double>();
    m.normalizers.overall[y] = n.at("overall").at(y).get<double>();
  }
  m.diagnostics = {};
  if (j.contains("diagnostics")) {
    const auto& d = j.at("diagnostics");
    m.diagnostics.iterations = d.value("iterations", 0);
    m.diagnostics.max_violation = d.value("max_violation", 0.0);
    m.diagnostics.kkt_residual = d.value("kkt_residual", 0.0);
    m.diagnostics.dual_objective = d.value("dual_objective", 0.0);
    m.diagnostics.baseline_geo = d.value("baseline_geo", 0.0);
    m.diagnostics.fitted_geo = d.value("fitted_geo", 0.0);
    m.diagnostics.solver = d.value("solver", std::string{});
  }
}

}  // namespace fairpost::fst
