#include <gtest/gtest.h>

#include <cmath>

#include "kdreplica/core/dataset.hpp"
#include "kdreplica/erm/lbfgs.hpp"
#include "kdreplica/erm/measure.hpp"
#include "kdreplica/erm/train.hpp"
#include "kdreplica/estimators/estimators.hpp"

using namespace kdreplica;

namespace {

ModelParams student_params(double chi, double temp, double lambda_s, double eta,
                           double eps = 0.0) {
  ModelParamsInit v;
  v.alpha = 2.0;
  v.rho = 0.3;
  v.chi = chi;
  v.temp = temp;
  v.lambda_s = lambda_s;
  v.eta = eta;
  v.eps_smooth = eps;
  return ModelParams(v);
}

// Objective of a classifier in the original (w, b) coordinates:
// kLossScale * sum of losses + lambda/2 |w|^2.
double objective(const Dataset& d, const TrainedClassifier& c, const KdLoss& loss,
                 const std::vector<double>& targets, const Eigen::VectorXd& th,
                 double lambda) {
  const Eigen::VectorXd h = preactivations(c, d);
  double f = 0.5 * lambda * c.weights.squaredNorm();
  for (int mu = 0; mu < d.n_samples; ++mu) {
    f += kLossScale * loss.value(targets[mu], th[mu], h[mu]);
  }
  return f;
}

// Damped Newton on (w_1..w_k, b) with an explicit Hessian; the reference
// minimizer for small problems.
TrainedClassifier newton_reference(const Dataset& d, const KdLoss& loss,
                                   const std::vector<double>& targets,
                                   const Eigen::VectorXd& th, double lambda, int k) {
  const double sn = std::sqrt(static_cast<double>(d.n_dim));
  Eigen::MatrixXd a(d.n_samples, k + 1);
  a.leftCols(k) = d.inputs.leftCols(k) / sn;
  a.col(k).setOnes();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(k + 1);
  Eigen::VectorXd reg = Eigen::VectorXd::Constant(k + 1, lambda);
  reg[k] = 0.0;
  auto value = [&](const Eigen::VectorXd& q) {
    const Eigen::VectorXd h = a * q;
    double f = 0.5 * lambda * q.head(k).squaredNorm();
    for (int mu = 0; mu < d.n_samples; ++mu) {
      f += kLossScale * loss.value(targets[mu], th[mu], h[mu]);
    }
    return f;
  };
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd h = a * p;
    Eigen::VectorXd d1(d.n_samples), d2(d.n_samples);
    for (int mu = 0; mu < d.n_samples; ++mu) {
      const LossJet j = loss.jet(targets[mu], th[mu], h[mu]);
      d1[mu] = kLossScale * j.d1;
      d2[mu] = kLossScale * j.d2;
    }
    const Eigen::VectorXd g = a.transpose() * d1 + reg.cwiseProduct(p);
    if (g.lpNorm<Eigen::Infinity>() < 1e-13) break;
    Eigen::MatrixXd hess = a.transpose() * d2.asDiagonal() * a;
    hess.diagonal() += reg;
    const Eigen::VectorXd step = hess.ldlt().solve(g);
    double t = 1.0;
    const double f0 = value(p);
    while (value(p - t * step) > f0 && t > 1e-10) t *= 0.5;
    p -= t * step;
  }
  TrainedClassifier c;
  c.weights = Eigen::VectorXd::Zero(d.n_dim);
  c.weights.head(k) = p.head(k);
  c.bias = p[k];
  c.n_active = k;
  return c;
}

}  // namespace

TEST(Lbfgs, MinimizesIllConditionedQuadratic) {
  const int n = 30;
  Eigen::VectorXd diag(n), target(n);
  for (int i = 0; i < n; ++i) {
    diag[i] = std::pow(10.0, 4.0 * i / (n - 1));
    target[i] = std::sin(i + 1.0);
  }
  auto fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const Eigen::VectorXd r = x - target;
    g = diag.cwiseProduct(r);
    return 0.5 * r.dot(g);
  };
  auto measure = [](const Eigen::VectorXd&, const Eigen::VectorXd& g) {
    return g.lpNorm<Eigen::Infinity>();
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  LbfgsOptions opt;
  opt.grad_tol = 1e-10;
  const auto r = lbfgs_minimize(fg, measure, x, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((x - target).lpNorm<Eigen::Infinity>(), 1e-9);
  EXPECT_LE(r.grad_norm, 1e-10);
}

TEST(Lbfgs, StopsAtIterationBudget) {
  auto fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    // Rosenbrock: needs far more than 3 iterations.
    g.resize(2);
    g[0] = -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] * x[0]);
    g[1] = 200 * (x[1] - x[0] * x[0]);
    return (1 - x[0]) * (1 - x[0]) + 100 * std::pow(x[1] - x[0] * x[0], 2);
  };
  auto measure = [](const Eigen::VectorXd&, const Eigen::VectorXd& g) {
    return g.lpNorm<Eigen::Infinity>();
  };
  Eigen::VectorXd x(2);
  x << -1.2, 1.0;
  LbfgsOptions opt;
  opt.max_iters = 3;
  const auto r = lbfgs_minimize(fg, measure, x, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
  x << -1.2, 1.0;
  opt.max_iters = 2000;
  EXPECT_TRUE(lbfgs_minimize(fg, measure, x, opt).converged);
  EXPECT_NEAR(x[0], 1.0, 1e-6);
}

TEST(Training, TeacherMatchesNewtonReference) {
  for (double lambda : {1e-3, 0.1, 3.0}) {
    const Dataset d = sample_dataset(60, 2.0, 1.0, 0.3, 4);
    const auto clf = train_teacher(d, lambda, 0.0, 1e-10);
    ASSERT_TRUE(clf.train_meta.converged);
    const KdLoss loss{0.0, 1.0};
    const auto targets = detail::smoothed_targets(d, 0.0);
    const Eigen::VectorXd th = Eigen::VectorXd::Zero(d.n_samples);
    const auto ref = newton_reference(d, loss, targets, th, lambda, d.n_dim);
    const double f = objective(d, clf, loss, targets, th, lambda);
    const double f_ref = objective(d, ref, loss, targets, th, lambda);
    EXPECT_NEAR(f, f_ref, 1e-10 * std::max(1.0, std::abs(f_ref)));
    EXPECT_LT((clf.weights - ref.weights).lpNorm<Eigen::Infinity>(), 1e-6);
    EXPECT_NEAR(clf.bias, ref.bias, 1e-6);
  }
}

TEST(Training, StudentMatchesNewtonReference) {
  const Dataset d = sample_dataset(80, 2.0, 1.0, 0.3, 8);
  const auto teacher = train_teacher(d, 0.05);
  for (double chi : {0.3, 1.0}) {
    const ModelParams p = student_params(chi, 2.0, 0.02, 0.5, 0.05);
    const auto clf = train_student_kd(d, teacher, p, 1e-10);
    ASSERT_TRUE(clf.train_meta.converged);
    const KdLoss loss = KdLoss::from(p);
    const auto targets = detail::smoothed_targets(d, p.eps_smooth());
    const Eigen::VectorXd th = preactivations(teacher, d);
    const auto ref = newton_reference(d, loss, targets, th, p.lambda_s(), 40);
    const double f = objective(d, clf, loss, targets, th, p.lambda_s());
    const double f_ref = objective(d, ref, loss, targets, th, p.lambda_s());
    EXPECT_NEAR(f, f_ref, 1e-10 * std::max(1.0, std::abs(f_ref)));
    EXPECT_LT((clf.weights - ref.weights).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Training, GradientVanishesAtSolution) {
  // Finite differences of the objective in w_j and b around the trained point.
  const Dataset d = sample_dataset(100, 1.5, 1.0, 0.3, 2);
  const auto teacher = train_teacher(d, 0.1);
  const ModelParams p = student_params(0.6, 1.5, 0.05, 1.0);
  auto clf = train_student_kd(d, teacher, p, 1e-9);
  const KdLoss loss = KdLoss::from(p);
  const auto targets = detail::smoothed_targets(d, 0.0);
  const Eigen::VectorXd th = preactivations(teacher, d);
  const double e = 1e-5;
  for (int j : {0, 17, 99}) {
    auto plus = clf, minus = clf;
    plus.weights[j] += e;
    minus.weights[j] -= e;
    const double g = (objective(d, plus, loss, targets, th, 0.05) -
                      objective(d, minus, loss, targets, th, 0.05)) /
                     (2 * e);
    EXPECT_NEAR(g, 0.0, 1e-6);
  }
  auto plus = clf, minus = clf;
  plus.bias += e;
  minus.bias -= e;
  const double gb = (objective(d, plus, loss, targets, th, 0.05) -
                     objective(d, minus, loss, targets, th, 0.05)) /
                    (2 * e);
  EXPECT_NEAR(gb, 0.0, 1e-6);
}

TEST(Training, SparseMaskIsExact) {
  const Dataset d = sample_dataset(101, 3.0, 1.0, 0.2, 3);
  const auto teacher = train_teacher(d, 0.1);
  const auto clf = train_student_kd(d, teacher, student_params(0.5, 1.0, 0.1, 0.33));
  EXPECT_EQ(clf.n_active, 33);
  EXPECT_TRUE(clf.weights.tail(101 - 33).isZero(0.0));
  EXPECT_GT(clf.weights.head(33).norm(), 0.0);
}

TEST(Training, Deterministic) {
  const Dataset d = sample_dataset(120, 2.0, 1.0, 0.2, 6);
  const auto a = train_teacher(d, 0.1);
  const auto b = train_teacher(d, 0.1);
  EXPECT_TRUE(a.weights == b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(Training, HugeRidgeKeepsOnlyTheBias) {
  const Dataset d = sample_dataset(100, 3.0, 1.0, 0.2, 9);
  const auto clf = train_teacher(d, 1e6);
  EXPECT_LT(clf.weights.lpNorm<Eigen::Infinity>(), 1e-3);
  double frac = 0.0;
  for (int y : d.labels) frac += y;
  frac /= d.n_samples;
  EXPECT_NEAR(clf.bias, std::log(frac / (1 - frac)), 1e-3);
}

TEST(Training, SeparableDataStaysFiniteWithRidge) {
  // Two points, one per class: separable; the ridge keeps the minimizer finite.
  Dataset d;
  d.n_dim = 3;
  d.n_samples = 2;
  d.inputs.resize(2, 3);
  d.inputs << 1, 0, 0, -1, 0, 0;
  d.labels = {1, 0};
  d.signal = Eigen::VectorXd::Ones(3);
  const auto clf = train_teacher(d, 1e-3);
  EXPECT_TRUE(clf.train_meta.converged);
  EXPECT_TRUE(clf.weights.allFinite());
  EXPECT_GT(clf.weights[0], 1.0);
  EXPECT_NEAR(clf.weights[1], 0.0, 1e-12);
}

TEST(Training, ChiZeroStudentIsRidgeOnActiveCoordinates) {
  const Dataset d = sample_dataset(90, 2.0, 1.0, 0.3, 12);
  const auto teacher = train_teacher(d, 0.1);
  const auto s = train_student_kd(d, teacher, student_params(0.0, 3.0, 0.2, 0.5), 1e-10);
  Dataset sub = d;
  sub.n_dim = 45;
  sub.inputs = d.inputs.leftCols(45) * std::sqrt(90.0 / 45.0);
  sub.signal = d.signal.head(45);
  // x.w/sqrt(90) = x_sub.w'/sqrt(45) with x_sub = x sqrt(2), w' = w / 2 ... the
  // ridge then changes by the same factor: lambda' = 4 lambda.
  const auto r = train_teacher(sub, 0.2 * 4.0, 0.0, 1e-10);
  EXPECT_LT((s.weights.head(45) - 2.0 * r.weights).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_NEAR(s.bias, r.bias, 1e-7);
}

TEST(Training, Validation) {
  const Dataset d = sample_dataset(20, 2.0, 1.0, 0.3, 1);
  EXPECT_THROW(train_teacher(d, -1.0), std::invalid_argument);
  EXPECT_THROW(train_teacher(d, 0.1, 0.0, 0.0), std::invalid_argument);
  const auto other = train_teacher(sample_dataset(21, 2.0, 1.0, 0.3, 1), 0.1);
  EXPECT_THROW(train_student_kd(d, other, student_params(1, 1, 0.1, 1)),
               std::invalid_argument);
}

TEST(Measure, SignalAlignedClassifier) {
  const Dataset d = sample_dataset(200, 1.0, 1.0, 0.5, 5);
  TrainedClassifier c;
  c.weights = d.signal;
  c.n_active = 200;
  const double vv = d.signal.squaredNorm() / 200;
  auto st = measure_macro_state(c, d, c);
  EXPECT_NEAR(st.m, vv, 1e-14);
  EXPECT_NEAR(st.q, vv, 1e-14);
  EXPECT_NEAR(*st.s, vv, 1e-14);
  EXPECT_NEAR(*st.q_t, vv, 1e-14);
  EXPECT_EQ(*st.b_t, 0.0);
  EXPECT_FALSE(measure_macro_state(c, d).s.has_value());
}

TEST(Measure, ConstantClassifierError) {
  TrainedClassifier c;
  c.weights = Eigen::VectorXd::Zero(50);
  c.n_active = 50;
  ModelParamsInit v;
  v.rho = 0.2;
  const ModelParams p(v);
  const Eigen::VectorXd sig = Eigen::VectorXd::Ones(50);
  c.bias = -1.0;  // always predicts 0
  EXPECT_NEAR(empirical_test_error(c, sig, p, 100000, 1).error, 0.2, 0.006);
  c.bias = 0.0;  // tie predicts 1
  EXPECT_NEAR(empirical_test_error(c, sig, p, 100000, 1).error, 0.8, 0.006);
}

TEST(Measure, PerfectSignalClassifierError) {
  TrainedClassifier c;
  c.weights = Eigen::VectorXd::Ones(400);
  c.n_active = 400;
  const ModelParams p;  // Delta = 1, rho = 1/2
  const auto e = empirical_test_error(c, c.weights, p, 400000, 3);
  EXPECT_NEAR(e.error, 0.15865525393145707, 4 * e.std_error);
  EXPECT_GT(e.std_error, 0.0);
  EXPECT_THROW(empirical_test_error(c, c.weights, p, 0, 3), std::invalid_argument);
}

TEST(Measure, DiagnosticsOfACopy) {
  const Dataset d = sample_dataset(100, 2.0, 1.0, 0.3, 2);
  const auto t = train_teacher(d, 0.1);
  const ModelParams p = student_params(1.0, 1.0, 0.1, 1.0);
  const auto r = diagnostics(t, t, d, p);
  EXPECT_EQ(r.output_mse, 0.0);
  EXPECT_EQ(r.preact_mse, 0.0);
  EXPECT_NEAR(r.weight_norm, t.weights.squaredNorm() / 100, 1e-15);
}

TEST(Measure, UnderparametrizedPureDistillationInterpolatesTheTeacher) {
  // alpha < eta: the student has more free coordinates than samples, so with a
  // vanishing ridge it can match every teacher output.
  const Dataset d = sample_dataset(200, 0.3, 1.0, 0.3, 7);
  const auto t = train_teacher(d, 0.1);
  const ModelParams p = student_params(1.0, 1.0, 1e-8, 0.5);
  const auto s = train_student_kd(d, t, p, 1e-10, 20000);
  EXPECT_LT(diagnostics(t, s, d, p).output_mse, 1e-6);
}
