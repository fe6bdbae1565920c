#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairpost/error.hpp"
#include "fairpost/fst.hpp"
#include "fairpost/numeric.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fairpost;

namespace {

struct Tiny {
  std::vector<double> r;
  std::vector<int> a;
};

Tiny tiny_instance(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    Tiny t;
    int members = 0;
    for (std::size_t i = 0; i < n; ++i) {
      t.a.push_back(u(rng) < 0.4 ? 1 : 0);
      members += t.a.back();
      // Group scores skew high so the constraints bite.
      const double base = t.a.back() ? 0.35 : 0.05;
      t.r.push_back(base + 0.6 * u(rng));
    }
    if (members > 0 && members < static_cast<int>(n)) return t;
  }
}

std::vector<double> transformed(const fst::Model& m, const Tiny& t) {
  std::vector<double> s;
  for (std::size_t i = 0; i < t.r.size(); ++i) s.push_back(m.transform(t.r[i], t.a[i]));
  return s;
}

}  // namespace

TEST(PrimalFromMu, MatchesBisectionOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 300; ++k) {
    const double r = 1e-6 + (1.0 - 2e-6) * u(rng);
    const double mu = (u(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, -3.0 + 7.0 * u(rng));
    EXPECT_NEAR(fst::primal_from_mu(r, mu), oracle::primal_from_mu(r, mu), 1e-8) << r << " " << mu;
  }
}

TEST(PrimalFromMu, ZeroMultiplierIsIdentity) {
  for (double r : {1e-6, 0.1, 0.5, 0.77, 1.0 - 1e-6}) EXPECT_EQ(fst::primal_from_mu(r, 0.0), r);
}

TEST(CubicStep, MatchesBisectionOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 300; ++k) {
    const double r = 1e-6 + (1.0 - 2e-6) * u(rng);
    const double v = -1.0 + 3.0 * u(rng);
    const double rho = std::pow(10.0, -3.0 + 7.0 * u(rng));
    EXPECT_NEAR(fst::admm_cubic_step(r, v, rho), oracle::cubic_step(r, v, rho), 1e-8)
        << r << " " << v << " " << rho;
  }
}

TEST(CubicStep, SymmetricPoint) {
  for (double rho : {1e-3, 0.5, 4.0, 1e4}) EXPECT_NEAR(fst::admm_cubic_step(0.5, 0.5, rho), 0.5, 1e-12);
}

TEST(Dual, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const auto t = tiny_instance(rng, 15);
  for (auto mode : {EoMode::complement, EoMode::overall}) {
    const fst::ConstraintSystem sys(t.r, t.a, 0.01, mode);
    const std::array<double, 4> lam{0.7, 0.2, 1.3, 0.4};
    const auto ev = fst::evaluate_dual(sys, lam);
    for (int j = 0; j < 4; ++j) {
      const double h = 1e-5;
      auto up = lam, dn = lam;
      up[j] += h;
      dn[j] -= h;
      const double fd = (fst::evaluate_dual(sys, up).value - fst::evaluate_dual(sys, dn).value) / (2 * h);
      EXPECT_NEAR(ev.gradient[j], fd, 1e-7) << "j=" << j;
    }
  }
}

TEST(Dual, ConstraintRowsMatchDefinition) {
  std::mt19937_64 rng(4);
  const auto t = tiny_instance(rng, 12);
  for (bool overall : {false, true}) {
    const fst::ConstraintSystem sys(t.r, t.a, 0.05, overall ? EoMode::overall : EoMode::complement);
    const auto rows = oracle::fst_rows({t.r, t.a, 0.05, overall});
    for (int j = 0; j < 4; ++j) {
      for (std::size_t i = 0; i < t.r.size(); ++i) {
        EXPECT_NEAR(sys.coefficient(j, i), rows[j](static_cast<Eigen::Index>(i)), 1e-15);
      }
    }
  }
}

class FstOracle : public ::testing::TestWithParam<std::tuple<fst::Solver, EoMode>> {};

TEST_P(FstOracle, MatchesPrimalBarrier) {
  const auto [solver, mode] = GetParam();
  std::mt19937_64 rng(10 + static_cast<int>(solver) + 2 * static_cast<int>(mode));
  fst::Options opts;
  opts.solver = solver;
  opts.mode = mode;
  for (int rep = 0; rep < 8; ++rep) {
    const auto t = tiny_instance(rng, 6 + rep * 2);
    const double eps = 0.01 + 0.02 * rep;
    const auto m = fst::fit_scores(t.r, t.a, eps, opts);
    const auto s = transformed(m, t);
    const oracle::FstProblem prob{t.r, t.a, eps, mode == EoMode::overall};
    const auto ref = oracle::fst_barrier(prob);
    Eigen::VectorXd sv(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) sv(static_cast<Eigen::Index>(i)) = s[i];
    EXPECT_NEAR(oracle::cross_entropy(t.r, sv), ref.objective, 1e-3) << "rep " << rep;
    EXPECT_LE(oracle::fst_proxy_geo(prob, s), eps + 1e-3) << "rep " << rep;
  }
}

INSTANTIATE_TEST_SUITE_P(Solvers, FstOracle,
                         ::testing::Combine(::testing::Values(fst::Solver::projected_gradient,
                                                              fst::Solver::admm),
                                            ::testing::Values(EoMode::complement, EoMode::overall)),
                         [](const auto& info) {
                           return fst::to_string(std::get<0>(info.param)) + "_" +
                                  to_string(std::get<1>(info.param));
                         });

TEST(Fst, IdentityWhenEpsilonCoversBaseline) {
  std::mt19937_64 rng(5);
  const auto t = tiny_instance(rng, 40);
  const fst::ConstraintSystem sys(t.r, t.a, 1.0, EoMode::complement);
  const double base = sys.proxy_geo(t.r);
  for (auto solver : {fst::Solver::projected_gradient, fst::Solver::admm}) {
    fst::Options opts;
    opts.solver = solver;
    const auto m = fst::fit_scores(t.r, t.a, base, opts);
    EXPECT_TRUE(m.is_identity());
    for (std::size_t i = 0; i < t.r.size(); ++i) EXPECT_EQ(m.transform(t.r[i], t.a[i]), t.r[i]);
    // Scores outside the clamp range pass through untouched as well.
    EXPECT_EQ(m.transform(0.0, 1), 0.0);
    EXPECT_EQ(m.transform(1.0, 0), 1.0);
  }
}

TEST(Fst, SolversAgree) {
  SyntheticConfig cfg;
  cfg.n = 4000;
  cfg.seed = 9;
  cfg.group_rate = 0.3;
  cfg.positive_rate = 0.3;
  cfg.group_bias = {0.0, 0.2};
  const auto ds = generate_synthetic(cfg);
  for (double eps : {0.005, 0.02}) {
    fst::Options a, b;
    b.solver = fst::Solver::admm;
    const auto ma = fst::fit(ds, cfg.attribute, eps, a);
    const auto mb = fst::fit(ds, cfg.attribute, eps, b);
    const auto sa = fst::transform_scores(ma, ds);
    const auto sb = fst::transform_scores(mb, ds);
    double ss = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) ss += (sa[i] - sb[i]) * (sa[i] - sb[i]);
    EXPECT_LE(std::sqrt(ss / sa.size()), 1e-4) << "eps " << eps;
  }
}

TEST(Fst, EmptyCellIsDegenerate) {
  // Group has no soft weight at all: every member is missing.
  const std::vector<double> r{0.2, 0.4, 0.6};
  const std::vector<int> a{0, 0, 0};
  EXPECT_THROW(fst::fit_scores(r, a, 0.05), DegenerateGroupError);
}

TEST(Fst, RejectsBadInputs) {
  const std::vector<double> r{0.2, 1.4, 0.6};
  const std::vector<int> a{0, 1, 0};
  EXPECT_THROW(fst::fit_scores(r, a, 0.05), InvalidArgument);
  const std::vector<double> ok{0.2, 0.4, 0.6};
  EXPECT_THROW(fst::fit_scores(ok, a, -0.1), InvalidArgument);
  const std::vector<int> bad_group{0, 2, 0};
  EXPECT_THROW(fst::fit_scores(ok, bad_group, 0.05), InvalidArgument);
}

TEST(Fst, NonConvergenceCarriesDiagnostics) {
  std::mt19937_64 rng(6);
  const auto t = tiny_instance(rng, 30);
  fst::Options opts;
  opts.max_iters = 1;
  opts.feasibility_tol = 1e-12;
  opts.kkt_tol = 1e-300;
  opts.relative_objective_tol = 0.0;
  try {
    fst::fit_scores(t.r, t.a, 0.001, opts);
    FAIL() << "expected FitError";
  } catch (const fst::FitError& e) {
    EXPECT_GE(e.diagnostics().iterations, 1);
    EXPECT_EQ(e.diagnostics().solver, "pgd");
  }
}

TEST(Fst, DatasetFitCountsMissingAsComplement) {
  std::mt19937_64 rng(7);
  auto inst = fixture::random_instance(rng, 60);
  auto with_missing = inst.membership;
  with_missing[0] = with_missing[0] == 1 ? 1 : -1;  // drop one complement annotation at most
  const auto ds_full = fixture::make(inst.labels, inst.scores, inst.membership);
  const auto ds_missing = fixture::make(inst.labels, inst.scores, with_missing);
  EXPECT_EQ(fst::fit(ds_full, "g", 0.01).lambdas, fst::fit(ds_missing, "g", 0.01).lambdas);
}

TEST(Fst, JsonRoundTripIsExact) {
  std::mt19937_64 rng(8);
  const auto t = tiny_instance(rng, 25);
  auto m = fst::fit_scores(t.r, t.a, 0.01);
  m.attribute = "g";
  const nlohmann::json j = m;
  EXPECT_EQ(j.get<fst::Model>(), m);
  auto bad = j;
  bad["lambdas"][0] = -1.0;
  EXPECT_THROW(bad.get<fst::Model>(), InvalidArgument);
}

TEST(Fst, FittedSplitMeetsEpsilon) {
  SyntheticConfig cfg;
  cfg.n = 5000;
  cfg.seed = 12;
  cfg.group_rate = 0.2;
  cfg.group_bias = {-0.1, 0.15};
  const auto ds = generate_synthetic(cfg);
  const auto g = ds.membership(cfg.attribute);
  std::vector<double> r;
  for (double s : ds.scores()) r.push_back(clamp_score(s));
  for (double eps : {0.001, 0.01, 0.05}) {
    const auto m = fst::fit(ds, cfg.attribute, eps);
    const auto s = fst::transform_scores(m, ds);
    EXPECT_LE(expected_geo_difference(g, r, s), eps + 1e-3);
    EXPECT_LE(m.diagnostics.fitted_geo, eps + 1e-3);
  }
}
