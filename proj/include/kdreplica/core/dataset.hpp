#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "kdreplica/core/params.hpp"

namespace kdreplica {

/// y ~ rho delta(y - 1) + (1 - rho) delta(y).
struct BinaryLabelDistribution {
  double rho = 0.5;

  template <class Rng>
  int operator()(Rng& rng) const {
    return std::bernoulli_distribution(rho)(rng) ? 1 : 0;
  }
};

/// A finite-size Gaussian mixture sample:
///   x^mu = (2 y^mu - 1) v / sqrt(N) + sqrt(Delta) z^mu.
struct Dataset {
  int n_dim = 0;
  int n_samples = 0;
  Eigen::MatrixXd inputs;  // n_samples x n_dim
  std::vector<int> labels;
  Eigen::VectorXd signal;
  std::uint64_t seed = 0;
};

struct SampleOptions {
  /// Use v = (1, ..., 1) instead of a Gaussian signal.
  bool gauge_signal = false;
};

/// Samples a dataset with M = round(alpha N) rows. `delta` may be 0 here
/// (noiseless rows), which ModelParams itself does not allow.
inline Dataset sample_dataset(int n_dim, double alpha, double delta,
                              double rho, std::uint64_t seed,
                              SampleOptions opts = {}) {
  if (n_dim < 1) throw std::invalid_argument("sample_dataset: n_dim < 1");
  if (!(delta >= 0)) throw std::invalid_argument("sample_dataset: delta < 0");
  const long m = std::lround(alpha * n_dim);
  if (m < 1) {
    throw std::invalid_argument(
        "sample_dataset: alpha * n_dim < 1 gives an empty dataset");
  }

  Dataset d;
  d.n_dim = n_dim;
  d.n_samples = static_cast<int>(m);
  d.seed = seed;
  d.inputs.resize(d.n_samples, n_dim);
  d.labels.resize(d.n_samples);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  d.signal.resize(n_dim);
  for (int i = 0; i < n_dim; ++i) {
    d.signal[i] = opts.gauge_signal ? 1.0 : gauss(rng);
  }

  const BinaryLabelDistribution labels{rho};
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n_dim));
  const double noise = std::sqrt(delta);
  for (int mu = 0; mu < d.n_samples; ++mu) {
    const int y = labels(rng);
    d.labels[mu] = y;
    const double sign = 2.0 * y - 1.0;
    for (int i = 0; i < n_dim; ++i) {
      d.inputs(mu, i) = sign * d.signal[i] * inv_sqrt_n + noise * gauss(rng);
    }
  }
  return d;
}

inline Dataset sample_dataset(int n_dim, const ModelParams& params,
                              std::uint64_t seed, SampleOptions opts = {}) {
  return sample_dataset(n_dim, params.alpha(), params.delta(), params.rho(),
                        seed, opts);
}

}  // namespace kdreplica
