#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>

#include "kdreplica/core/dataset.hpp"
#include "kdreplica/core/losses.hpp"
#include "kdreplica/core/params.hpp"
#include "kdreplica/erm/train.hpp"
#include "kdreplica/estimators/classifier.hpp"
#include "kdreplica/estimators/estimators.hpp"

namespace kdreplica {

/// Training-set quantities comparing a student with its teacher.
struct TrainReport {
  double per_pattern_loss = 0.0;  // mean student distillation loss
  double weight_norm = 0.0;       // |w|^2 / N of the student
  double output_mse = 0.0;        // mean (sigma(h_t) - sigma(h))^2
  double preact_mse = 0.0;        // mean (h_t - h)^2
};

/// Order parameters of `clf` with respect to the dataset signal, plus the
/// overlap with `other` when given.
inline MacroState measure_macro_state(
    const TrainedClassifier& clf, const Dataset& data,
    const std::optional<TrainedClassifier>& other = std::nullopt) {
  if (clf.n_dim() != data.n_dim || data.signal.size() != data.n_dim) {
    throw std::invalid_argument("measure_macro_state: dimension mismatch");
  }
  const double n = data.n_dim;
  MacroState st;
  st.m = clf.weights.dot(data.signal) / n;
  st.q = clf.weights.squaredNorm() / n;
  st.b = clf.bias;
  if (other) {
    if (other->n_dim() != data.n_dim) {
      throw std::invalid_argument("measure_macro_state: dimension mismatch");
    }
    st.s = clf.weights.dot(other->weights) / n;
    st.m_t = other->weights.dot(data.signal) / n;
    st.q_t = other->weights.squaredNorm() / n;
    st.b_t = other->bias;
  }
  return st;
}

struct ErrorEstimate {
  double error = 0.0;
  double std_error = 0.0;
};

namespace detail {

inline ErrorEstimate binomial(long wrong, long n) {
  const double p = static_cast<double>(wrong) / static_cast<double>(n);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

}  // namespace detail

/// Misclassification rate on n_test fresh samples from the mixture with
/// signal `signal`. For a linear classifier the preactivation of a fresh
/// point is exactly
///   (2y - 1) w.v/N + sqrt(Delta) |w|/sqrt(N) xi + b,   xi ~ N(0, 1),
/// so only a scalar Gaussian is drawn per sample. Prediction is 1 iff h >= 0.
inline ErrorEstimate empirical_test_error(const TrainedClassifier& clf,
                                          const Eigen::VectorXd& signal,
                                          const ModelParams& params,
                                          long n_test, std::uint64_t seed) {
  if (n_test < 1) throw std::invalid_argument("empirical_test_error: n_test < 1");
  if (signal.size() != clf.n_dim()) {
    throw std::invalid_argument("empirical_test_error: dimension mismatch");
  }
  const double n = clf.n_dim();
  const double m = clf.weights.dot(signal) / n;
  const double spread =
      std::sqrt(params.delta() * clf.weights.squaredNorm() / n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const BinaryLabelDistribution labels{params.rho()};
  long wrong = 0;
  for (long i = 0; i < n_test; ++i) {
    const int y = labels(rng);
    const double h = (2.0 * y - 1.0) * m + spread * gauss(rng) + clf.bias;
    const int pred = h >= 0.0 ? 1 : 0;
    wrong += pred != y;
  }
  return detail::binomial(wrong, n_test);
}

/// Same estimate from fully sampled N-dimensional test points; slower, used to
/// cross-check the projected sampler.
inline ErrorEstimate empirical_test_error_full(const TrainedClassifier& clf,
                                               const Eigen::VectorXd& signal,
                                               const ModelParams& params,
                                               long n_test,
                                               std::uint64_t seed) {
  if (n_test < 1) throw std::invalid_argument("empirical_test_error: n_test < 1");
  const int n = clf.n_dim();
  if (signal.size() != n) {
    throw std::invalid_argument("empirical_test_error: dimension mismatch");
  }
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  const double noise = std::sqrt(params.delta());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const BinaryLabelDistribution labels{params.rho()};
  Eigen::RowVectorXd x(n);
  long wrong = 0;
  for (long i = 0; i < n_test; ++i) {
    const int y = labels(rng);
    const double sign = 2.0 * y - 1.0;
    for (int j = 0; j < n; ++j) {
      x[j] = sign * signal[j] * inv_sqrt_n + noise * gauss(rng);
    }
    const int pred = clf.preactivation(x) >= 0.0 ? 1 : 0;
    wrong += pred != y;
  }
  return detail::binomial(wrong, n_test);
}

/// Training-set diagnostics of a distilled student. The loss is the one the
/// student minimized (params: chi, temp, eps_smooth).
inline TrainReport diagnostics(const TrainedClassifier& teacher,
                               const TrainedClassifier& student,
                               const Dataset& data,
                               const ModelParams& params) {
  const Eigen::VectorXd ht = preactivations(teacher, data);
  const Eigen::VectorXd hs = preactivations(student, data);
  const KdLoss loss = KdLoss::from(params);
  TrainReport r;
  const double m = data.n_samples;
  for (int mu = 0; mu < data.n_samples; ++mu) {
    const double y = smooth_label(data.labels[mu], params.eps_smooth());
    r.per_pattern_loss += loss.value(y, ht[mu], hs[mu]);
    const double dout = sigmoid(ht[mu]) - sigmoid(hs[mu]);
    r.output_mse += dout * dout;
    r.preact_mse += (ht[mu] - hs[mu]) * (ht[mu] - hs[mu]);
  }
  r.per_pattern_loss /= m;
  r.output_mse /= m;
  r.preact_mse /= m;
  r.weight_norm = student.weights.squaredNorm() / data.n_dim;
  return r;
}

}  // namespace kdreplica
