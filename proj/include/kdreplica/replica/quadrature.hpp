#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace kdreplica {

/// Nodes and weights approximating E f(Z), Z ~ N(0, 1), by sum_i w_i f(z_i).
struct QuadratureGrid {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  int order = 0;
};

/// Probabilists' Gauss-Hermite rule of the given order (Golub-Welsch). Exact
/// for polynomials of degree <= 2 order - 1.
inline QuadratureGrid gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite: order < 1");
  // Jacobi matrix of the monic Hermite_e recurrence: off-diagonal sqrt(k).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order > 1 ? order - 1 : 0);
  for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("gauss_hermite: eigen-decomposition failed");
  }

  QuadratureGrid grid;
  grid.order = order;
  grid.nodes.resize(order);
  grid.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    grid.nodes[i] = eig.eigenvalues()[i];
    const double v0 = eig.eigenvectors()(0, i);
    grid.weights[i] = v0 * v0;
  }
  // Enforce exact mirror symmetry (eigenvalues come out sorted ascending).
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double z = 0.5 * (grid.nodes[j] - grid.nodes[i]);
    const double w = 0.5 * (grid.weights[i] + grid.weights[j]);
    grid.nodes[i] = -z;
    grid.nodes[j] = z;
    grid.weights[i] = grid.weights[j] = w;
  }
  if (order % 2 == 1) grid.nodes[order / 2] = 0.0;
  grid.weights /= grid.weights.sum();
  return grid;
}

}  // namespace kdreplica
