#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace kdreplica {

/// Optimizer bookkeeping attached to a trained classifier.
struct TrainMeta {
  int iterations = 0;
  double grad_norm = 0.0;  // max-norm of the final gradient
  bool converged = true;
};

/// Linear classifier f(x) = x . w / sqrt(N) + b. Only the first `n_active`
/// coordinates may be non-zero.
struct TrainedClassifier {
  Eigen::VectorXd weights;
  double bias = 0.0;
  int n_active = 0;
  TrainMeta train_meta;

  int n_dim() const { return static_cast<int>(weights.size()); }

  double preactivation(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return x.dot(weights) / std::sqrt(static_cast<double>(n_dim())) + bias;
  }
};

/// Number of trainable coordinates of an eta-sparse student in dimension N.
inline int active_count(int n_dim, double eta) {
  const int k = static_cast<int>(std::floor(eta * n_dim + 1e-9));
  return k < 1 ? 1 : k;
}

}  // namespace kdreplica
