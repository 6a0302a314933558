#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>

#include "kdreplica/core/dataset.hpp"
#include "kdreplica/estimators/classifier.hpp"

namespace kdreplica {

/// Macroscopic description of a linear classifier: m = w.v/N, q = |w|^2/N,
/// the bias, and optionally the overlap s = w.w_t/N with a teacher.
struct MacroState {
  double m = 0.0;
  double q = 0.0;
  double b = 0.0;
  std::optional<double> s;
  std::optional<double> m_t;
  std::optional<double> q_t;
  std::optional<double> b_t;
};

/// Gaussian upper tail H(x) = P(Z > x).
inline double gaussian_tail(double x) {
  return 0.5 * std::erfc(x / std::sqrt(2.0));
}

/// Asymptotic test error of a classifier with overlaps (m, q) and bias b:
///   rho H((m + b) / sqrt(Delta q)) + (1 - rho) H((m - b) / sqrt(Delta q)).
/// A point is assigned y = 1 when x.w/sqrt(N) + b > 0.
inline double generalization_error(double m, double q, double b, double delta,
                                   double rho) {
  if (!(q > 0.0)) {
    throw std::invalid_argument(
        "generalization_error: q must be > 0 (degenerate classifier)");
  }
  if (!(delta > 0.0)) {
    throw std::invalid_argument("generalization_error: delta must be > 0");
  }
  const double scale = std::sqrt(delta * q);
  return rho * gaussian_tail((m + b) / scale) +
         (1.0 - rho) * gaussian_tail((m - b) / scale);
}

inline double generalization_error(const MacroState& state, double delta,
                                   double rho) {
  return generalization_error(state.m, state.q, state.b, delta, rho);
}

/// Bias of the plug-in estimator, Delta q / 2 log(rho / (1 - rho)), with q the
/// intensive squared norm.
inline double plugin_bias(double q, double delta, double rho) {
  return 0.5 * delta * q * std::log(rho / (1.0 - rho));
}

namespace detail {

inline Eigen::VectorXd hebbian_weights(const Dataset& data) {
  const double n = data.n_dim;
  const double alpha = data.n_samples / n;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(data.n_dim);
  for (int mu = 0; mu < data.n_samples; ++mu) {
    w += (2.0 * data.labels[mu] - 1.0) * data.inputs.row(mu).transpose();
  }
  return w / (alpha * std::sqrt(n));
}

}  // namespace detail

/// Hebbian plug-in estimator w = 1/(alpha sqrt N) sum_mu (2y-1) x^mu with the
/// log-odds bias.
inline TrainedClassifier hebbian_estimator(const Dataset& data, double delta,
                                           double rho) {
  if (data.n_samples < 1) {
    throw std::invalid_argument("hebbian_estimator: empty dataset");
  }
  TrainedClassifier clf;
  clf.weights = detail::hebbian_weights(data);
  clf.n_active = data.n_dim;
  clf.bias =
      plugin_bias(clf.weights.squaredNorm() / data.n_dim, delta, rho);
  return clf;
}

/// Hebbian estimator restricted to the first floor(eta N) coordinates. The
/// bias is the full-support plug-in bias.
inline TrainedClassifier sparse_hebbian_estimator(const Dataset& data,
                                                  double eta, double delta,
                                                  double rho) {
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("sparse_hebbian_estimator: eta not in (0,1]");
  }
  TrainedClassifier clf = hebbian_estimator(data, delta, rho);
  if (eta < 1.0) {
    clf.n_active = active_count(data.n_dim, eta);
    clf.weights.tail(data.n_dim - clf.n_active).setZero();
  }
  return clf;
}

/// Bayes-optimal teacher proxy w = v + sqrt(Delta/alpha) z with bias
/// Delta (1 + Delta/alpha) / 2 log(rho / (1 - rho)).
inline TrainedClassifier bo_teacher_proxy(const Eigen::VectorXd& signal,
                                          double alpha, double delta,
                                          double rho, std::uint64_t seed) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("bo_teacher_proxy: alpha must be > 0");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double noise = std::sqrt(delta / alpha);
  TrainedClassifier clf;
  clf.weights.resize(signal.size());
  for (Eigen::Index i = 0; i < signal.size(); ++i) {
    clf.weights[i] = signal[i] + noise * gauss(rng);
  }
  clf.n_active = static_cast<int>(signal.size());
  clf.bias = plugin_bias(1.0 + delta / alpha, delta, rho);
  return clf;
}

/// Same, in the gauge v = (1, ..., 1).
inline TrainedClassifier bo_teacher_proxy(int n_dim, double alpha,
                                          double delta, double rho,
                                          std::uint64_t seed) {
  return bo_teacher_proxy(Eigen::VectorXd::Ones(n_dim), alpha, delta, rho,
                          seed);
}

/// Error floor of an eta-sparse learner: the plug-in macro state
/// (m = 1, q = 1 + Delta'/alpha') evaluated at the rescaled problem
/// (alpha', Delta') = (alpha / eta, Delta / eta).
inline double bayes_optimal_error(double alpha, double delta, double rho,
                                  double eta = 1.0) {
  if (!(alpha > 0.0 && delta > 0.0 && eta > 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("bayes_optimal_error: invalid arguments");
  }
  const double a = alpha / eta;
  const double d = delta / eta;
  const double q = 1.0 + d / a;
  return generalization_error(1.0, q, plugin_bias(q, d, rho), d, rho);
}

}  // namespace kdreplica
