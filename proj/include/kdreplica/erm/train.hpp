#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kdreplica/core/dataset.hpp"
#include "kdreplica/core/losses.hpp"
#include "kdreplica/core/params.hpp"
#include "kdreplica/erm/lbfgs.hpp"
#include "kdreplica/estimators/classifier.hpp"

namespace kdreplica {

/// Iteration budget of every trainer; hitting it leaves converged = false.
inline constexpr int kTrainBudget = 2000;

namespace detail {

/// Minimizes sum_mu loss(y_mu, t_mu, h_mu) + lambda/2 |w|^2 over the first
/// `n_active` weights and an unpenalized bias, h = x.w/sqrt(N) + b. Callers
/// pass the unit-weight ridge, lambda / kLossScale.
/// Internally the bias is carried as beta = b sqrt(N) so that both blocks of
/// the gradient scale alike; the stopping test uses the gradient in (w, b).
template <class Loss>
TrainedClassifier train_linear(const Dataset& data, const Loss& loss,
                               const std::vector<double>& targets,
                               const Eigen::VectorXd& teacher_h,
                               double lambda, int n_active, double tol,
                               int max_iters = kTrainBudget) {
  if (!(lambda >= 0)) throw std::invalid_argument("train: lambda < 0");
  if (!(tol > 0)) throw std::invalid_argument("train: tol <= 0");
  const int n = data.n_dim;
  const int k = n_active;
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const auto x = data.inputs.leftCols(k);
  const Eigen::Index m = x.rows();

  Eigen::VectorXd h(m), d1(m);
  Eigen::VectorXd grad_b_raw(1);
  auto fg = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    const auto w = p.head(k);
    const double b = p[k] / sqrt_n;
    h.noalias() = x * w;
    h = h / sqrt_n;
    h.array() += b;
    double f = 0.5 * lambda * w.squaredNorm();
    double sum_d1 = 0.0;
    for (Eigen::Index mu = 0; mu < m; ++mu) {
      const LossJet j = loss.jet(targets[mu], teacher_h[mu], h[mu]);
      f += j.value;
      d1[mu] = j.d1;
      sum_d1 += j.d1;
    }
    g.resize(k + 1);
    g.head(k).noalias() = x.transpose() * d1;
    g.head(k) = g.head(k) / sqrt_n + lambda * w;
    g[k] = sum_d1 / sqrt_n;
    grad_b_raw[0] = sum_d1;
    return f;
  };
  // fg has just been evaluated at p whenever measure is called.
  auto measure = [&](const Eigen::VectorXd&, const Eigen::VectorXd& g) {
    return std::max(g.head(k).lpNorm<Eigen::Infinity>(),
                    std::abs(grad_b_raw[0]));
  };

  // Start from w = 0 with the bias at the log-odds of the mean target.
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean = std::clamp(mean / static_cast<double>(m), 1e-6, 1.0 - 1e-6);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(k + 1);
  p[k] = std::log(mean / (1.0 - mean)) * sqrt_n;

  LbfgsOptions opt;
  opt.max_iters = max_iters;
  opt.grad_tol = tol;
  const LbfgsResult r = lbfgs_minimize(fg, measure, p, opt);

  TrainedClassifier clf;
  clf.weights = Eigen::VectorXd::Zero(n);
  clf.weights.head(k) = p.head(k);
  clf.bias = p[k] / sqrt_n;
  clf.n_active = k;
  clf.train_meta.iterations = r.iterations;
  clf.train_meta.grad_norm = r.grad_norm;
  clf.train_meta.converged = r.converged;
  return clf;
}

inline std::vector<double> smoothed_targets(const Dataset& data,
                                            double eps_smooth) {
  std::vector<double> t(data.labels.size());
  for (std::size_t mu = 0; mu < t.size(); ++mu) {
    t[mu] = smooth_label(data.labels[mu], eps_smooth);
  }
  return t;
}

}  // namespace detail

/// Preactivations of `clf` on every training row.
inline Eigen::VectorXd preactivations(const TrainedClassifier& clf,
                                      const Dataset& data) {
  if (clf.n_dim() != data.n_dim) {
    throw std::invalid_argument("preactivations: dimension mismatch");
  }
  Eigen::VectorXd h = data.inputs * clf.weights;
  h /= std::sqrt(static_cast<double>(data.n_dim));
  h.array() += clf.bias;
  return h;
}

/// Regularized logistic regression on all coordinates with labels smoothed
/// by eps_smooth. lambda_t is the ridge of the kLossScale-weighted objective.
inline TrainedClassifier train_teacher(const Dataset& data, double lambda_t,
                                       double eps_smooth = 0.0,
                                       double tol = 1e-8,
                                       int max_iters = kTrainBudget) {
  const Eigen::VectorXd unused = Eigen::VectorXd::Zero(data.n_samples);
  return detail::train_linear(data, LogisticLoss{},
                              detail::smoothed_targets(data, eps_smooth),
                              unused, lambda_t / kLossScale, data.n_dim, tol,
                              max_iters);
}

/// Distillation of `teacher` into the eta-sparse student described by
/// params (lambda_s, chi, temp, eps_smooth, eta).
inline TrainedClassifier train_student_kd(const Dataset& data,
                                          const TrainedClassifier& teacher,
                                          const ModelParams& params,
                                          double tol = 1e-8,
                                          int max_iters = kTrainBudget) {
  if (teacher.n_dim() != data.n_dim) {
    throw std::invalid_argument("train_student_kd: teacher dimension mismatch");
  }
  return detail::train_linear(data, KdLoss::from(params),
                              detail::smoothed_targets(data, params.eps_smooth()),
                              preactivations(teacher, data), params.ridge_s(),
                              active_count(data.n_dim, params.eta()), tol,
                              max_iters);
}

}  // namespace kdreplica
