#include <gtest/gtest.h>

#include <cmath>

#include "kdreplica/estimators/estimators.hpp"
#include "kdreplica/replica/bo_kd.hpp"
#include "kdreplica/replica/kd.hpp"
#include "kdreplica/replica/stationarity.hpp"
#include "kdreplica/replica/teacher.hpp"

using namespace kdreplica;

namespace {

ModelParams teacher_point(double alpha, double lambda_t, double rho = 0.2,
                          double delta = 1.0) {
  ModelParamsInit v;
  v.alpha = alpha;
  v.delta = delta;
  v.rho = rho;
  v.lambda_t = lambda_t;
  return ModelParams(v);
}

ModelParams kd_point(double alpha, double lambda_t, double lambda_s, double chi,
                     double temp, double eta) {
  ModelParamsInit v;
  v.alpha = alpha;
  v.rho = 0.2;
  v.lambda_t = lambda_t;
  v.lambda_s = lambda_s;
  v.chi = chi;
  v.temp = temp;
  v.eta = eta;
  return ModelParams(v);
}

void expect_rel(double got, double want, double rel, const char* what) {
  EXPECT_NEAR(got, want, rel * std::max(1.0, std::abs(want))) << what;
}

}  // namespace

// Reference values come from a separate Python solver: numpy Gauss-Hermite
// (100 nodes), vectorized bisection for the proximal step and a Powell hybrid
// root finder on the fixed-point residual, without damping or acceleration.
// That solver uses a unit loss weight, so its ridges are lambda / kLossScale.
TEST(TeacherSolver, FrozenReferenceValues) {
  struct Ref {
    double alpha, delta, rho, lambda_t, m, q, dq, b, eg;
  };
  for (const Ref& r :
       {Ref{3, 1, 0.2, 0.05, 1.41965837198, 3.72600250079, 3.75776394446,
            -1.59511247727, 0.154573994624},
        Ref{6, 1, 0.2, 0.05, 1.75723921119, 4.58272620911, 2.10762361877,
            -1.55203734485, 0.14121852052},
        Ref{1, 1, 0.2, 0.5, 0.223868913, 0.130296127734, 0.883657299252,
            -1.34206933801, 0.199810785856},
        Ref{2, 0.5, 0.3, 0.025, 2.02031285618, 6.24338959766, 10.1689616857,
            -0.873639501196, 0.112953263162}}) {
    const auto t = solve_teacher(teacher_point(r.alpha, r.lambda_t, r.rho, r.delta));
    expect_rel(t.m_t, r.m, 1e-7, "m");
    expect_rel(t.q_t, r.q, 1e-7, "q");
    expect_rel(t.dq_t, r.dq, 1e-7, "dq");
    expect_rel(t.b_t, r.b, 1e-7, "b");
    EXPECT_NEAR(t.eg, r.eg, 1e-8);
  }
}

TEST(KdSolver, FrozenReferenceValues) {
  struct Ref {
    double alpha, lambda_t, lambda_s, chi, temp;
    double m, q, dq, s, ds, b, eg;
  };
  for (const Ref& r :
       {Ref{3, 0.05, 0.005, 1.0, 1.0, 0.812714982906, 2.34154775739, 1.83583153467,
            1.87761670948, 1.03991158913, -1.52131858312, 0.186542582043},
        Ref{2, 0.025, 0.0005, 0.5, 2.0, 1.32083448124, 8.78836596857, 6.87154363497,
            4.23586875319, 1.13102400115, -2.0989744658, 0.220174141567}}) {
    const ModelParams p = kd_point(r.alpha, r.lambda_t, r.lambda_s, r.chi, r.temp, 0.5);
    const auto t = solve_teacher(p);
    const auto s = solve_kd(p, t);
    expect_rel(s.m, r.m, 1e-7, "m");
    expect_rel(s.q, r.q, 1e-7, "q");
    expect_rel(s.dq, r.dq, 1e-7, "dq");
    expect_rel(s.s, r.s, 1e-7, "S");
    expect_rel(s.ds, r.ds, 1e-7, "dS");
    expect_rel(s.b, r.b, 1e-7, "b");
    EXPECT_NEAR(s.eg, r.eg, 1e-8);
  }
}

TEST(TeacherSolver, FixedPointIsStationary) {
  for (double alpha : {0.5, 2.0, 5.0}) {
    for (double lt : {1e-3, 0.1, 10.0}) {
      const ModelParams p = teacher_point(alpha, lt);
      const auto t = solve_teacher(p);
      EXPECT_LT(max_abs(teacher_stationarity(p, t)), 1e-6)
          << "alpha " << alpha << " lambda " << lt;
      EXPECT_NEAR(teacher_free_entropy(p, t), t.free_entropy, 1e-12);
    }
  }
}

TEST(TeacherSolver, LargeRegularizationApproachesPluginRule) {
  // lambda -> inf: w ~ Hebbian direction, error -> Bayes error for rho = 1/2.
  const ModelParams p = teacher_point(3.0, 1e4, 0.5);
  const auto t = solve_teacher(p);
  EXPECT_NEAR(t.eg, bayes_optimal_error(3.0, 1.0, 0.5), 1e-5);
  EXPECT_NEAR(t.b_t, 0.0, 1e-12);
}

TEST(KdSolver, FixedPointIsStationary) {
  for (double chi : {0.0, 0.5, 1.0}) {
    for (double eta : {0.3, 1.0}) {
      const ModelParams p = kd_point(2.5, 0.05, 0.02, chi, 2.0, eta);
      const auto t = solve_teacher(p);
      const auto s = solve_kd(p, t);
      EXPECT_LT(max_abs(kd_stationarity(p, t, s)), 1e-6)
          << "chi " << chi << " eta " << eta;
      EXPECT_NEAR(kd_free_entropy(p, t, s), s.free_entropy, 1e-12);
    }
  }
}

TEST(KdSolver, ChiZeroIsARescaledTeacherProblem) {
  // Without the teacher term the student is a ridge classifier on eta N
  // coordinates: {eta, alpha, Delta, lambda} ~ {1, alpha/eta, Delta/eta, lambda/eta^2}.
  for (double eta : {1.0, 0.6, 0.25}) {
    const double alpha = 2.0, lambda = 0.03;
    const ModelParams p = kd_point(alpha, 0.1, lambda, 0.0, 1.0, eta);
    const auto s = solve_kd(p, solve_teacher(p));
    const auto ref =
        solve_teacher(teacher_point(alpha / eta, lambda / (eta * eta), 0.2, 1.0 / eta));
    EXPECT_NEAR(s.eg, ref.eg, 1e-8);
    // Effective weights eta w on eta N coordinates: m' = m, q' = eta q.
    expect_rel(s.m, ref.m_t, 1e-7, "m");
    expect_rel(eta * s.q, ref.q_t, 1e-7, "q");
    expect_rel(s.b, ref.b_t, 1e-7, "b");
  }
}

TEST(KdSolver, UnregularizedPureDistillationCopiesTheTeacher) {
  // chi = 1, T = 1, eta = 1, alpha > 1 and lambda_s -> 0: the teacher's weights
  // minimize the distillation loss, so the student reproduces them.
  const ModelParams p = kd_point(2.0, 0.1, 1e-7, 1.0, 1.0, 1.0);
  const auto t = solve_teacher(p);
  const auto s = solve_kd(p, t);
  EXPECT_NEAR(s.eg, t.eg, 1e-5);
  EXPECT_NEAR(s.q, t.q_t, 1e-4 * t.q_t);
  EXPECT_NEAR(s.s, t.q_t, 1e-4 * t.q_t);
  EXPECT_LT(s.out_mse, 1e-6);
  // With the same ridge as the teacher the student is shrunk instead.
  const auto shrunk = solve_kd(p.with("lambda_s", 0.1), t);
  EXPECT_LT(shrunk.q, t.q_t);
}

TEST(BoKd, DefaultProxyTeacherHasBayesError) {
  for (double alpha : {0.8, 3.0, 7.0}) {
    const ModelParams p = teacher_point(alpha, 0.1);
    EXPECT_NEAR(bo_teacher_error(p), bayes_optimal_error(alpha, 1.0, 0.2), 1e-15);
  }
  BoTeacherField alt;
  alt.minus_root = true;
  EXPECT_THROW(bo_teacher_error(teacher_point(0.5, 0.1), alt), std::invalid_argument);
  // The minus-root shape would beat the Bayes error, so it cannot describe an
  // estimator trained on the data; the plain bias is merely suboptimal.
  EXPECT_LT(bo_teacher_error(teacher_point(3.0, 0.1), alt),
            bo_teacher_error(teacher_point(3.0, 0.1)));
  BoTeacherField plain;
  plain.plain_delta_bias = true;
  EXPECT_GT(bo_teacher_error(teacher_point(3.0, 0.1), plain),
            bo_teacher_error(teacher_point(3.0, 0.1)));
}

TEST(BoKd, FixedPointIsStationary) {
  for (double chi : {0.3, 1.0}) {
    const ModelParams p = kd_point(3.0, 0.1, 0.01, chi, 1.0, 0.5);
    const auto s = solve_bo_kd(p);
    EXPECT_LT(max_abs(bo_kd_stationarity(p, s)), 1e-6) << "chi " << chi;
    EXPECT_NEAR(bo_kd_free_entropy(p, s), s.free_entropy, 1e-12);
    EXPECT_GT(s.eg, bayes_optimal_error(3.0, 1.0, 0.2, 0.5) - 1e-9);
  }
}

TEST(BoKd, ChiZeroMatchesOrdinaryKd) {
  const ModelParams p = kd_point(2.0, 0.1, 0.05, 0.0, 1.0, 0.7);
  const auto a = solve_bo_kd(p);
  const auto b = solve_kd(p, solve_teacher(p));
  EXPECT_NEAR(a.eg, b.eg, 1e-8);
  EXPECT_NEAR(a.m, b.m, 1e-7);
  EXPECT_NEAR(a.q, b.q, 1e-7);
}

TEST(Solver, WarmStartReachesTheSameFixedPoint) {
  const ModelParams p = kd_point(3.0, 0.1, 0.01, 0.7, 1.5, 0.5);
  const auto t = solve_teacher(p);
  const auto cold = solve_kd(p, t);
  const auto near = solve_kd(p.with("alpha", 3.1), solve_teacher(p.with("alpha", 3.1)));
  const auto warm = solve_kd(p, t, {}, near);
  EXPECT_NEAR(warm.m, cold.m, 1e-8);
  EXPECT_NEAR(warm.q, cold.q, 1e-8);
  EXPECT_LT(warm.iterations, cold.iterations);
}

TEST(Solver, ReportsFailures) {
  SolverConfig bad;
  bad.quad_order = 10;
  EXPECT_THROW(solve_teacher(teacher_point(2.0, 0.1), bad), std::invalid_argument);
  bad = {};
  bad.damping = 1.0;
  EXPECT_THROW(solve_teacher(teacher_point(2.0, 0.1), bad), std::invalid_argument);
  SolverConfig short_run;
  short_run.max_iters = 2;
  EXPECT_THROW(solve_teacher(teacher_point(2.0, 0.1), short_run), NonConvergenceError);
  try {
    solve_teacher(teacher_point(2.0, 0.1), short_run);
  } catch (const SolverError& e) {
    EXPECT_EQ(e.trajectory().size(), 2u);
  }
}
