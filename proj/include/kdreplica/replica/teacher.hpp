#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "kdreplica/core/losses.hpp"
#include "kdreplica/core/params.hpp"
#include "kdreplica/estimators/estimators.hpp"
#include "kdreplica/replica/prox.hpp"
#include "kdreplica/replica/quadrature.hpp"
#include "kdreplica/replica/solver_common.hpp"

namespace kdreplica {

/// Zero-temperature fixed point of ridge-regularized logistic regression.
struct TeacherOrderParams {
  double m_t = 0.1;
  double q_t = 1.0;
  double dq_t = 1.0;
  double b_t = 0.0;
  double mhat_t = 0.0;
  double qhat_t = 0.0;
  double dqhat_t = 0.0;

  double eg = 0.0;            // asymptotic test error
  double free_entropy = 0.0;
  double train_loss = 0.0;    // mean training loss per pattern
  int iterations = 0;
};

/// Energetic channel of the teacher problem. Nodes are (y, z) with
/// omega = sqrt(Delta q) z + (2y - 1) m + b and prox variance Delta dq.
class TeacherChannel {
 public:
  struct Moments {
    double g = 0, dg = 0;  // E g, E dg/domega
    double mg = 0;         // E (2y-1) g
    double g2 = 0;         // E g^2
    double gz = 0;         // E g z
    double value = 0;      // E M
    double loss = 0;       // E loss(h*)
  };
  using State = std::array<double, 3>;  // m, q, dq

  TeacherChannel(const ModelParams& params, QuadratureGrid grid)
      : p_(params), grid_(std::move(grid)),
        warm_(2 * grid_.order, std::numeric_limits<double>::quiet_NaN()) {}

  const QuadratureGrid& grid() const { return grid_; }

  Moments moments(const State& x, double b) const {
    const double delta = p_.delta();
    const double sq = std::sqrt(delta * x[1]);
    const double v = std::sqrt(delta * x[2]);
    const LogisticLoss loss{1.0};
    Moments mom;
    for (int label = 1; label >= 0; --label) {
      const double py = label == 1 ? p_.rho() : 1.0 - p_.rho();
      const double sign = 2.0 * label - 1.0;
      const double target = smooth_label(label, p_.eps_smooth());
      Moments part;
      for (int i = 0; i < grid_.order; ++i) {
        const double z = grid_.nodes[i];
        const double w = grid_.weights[i];
        const double omega = sq * z + sign * x[0] + b;
        double& cache = warm_[label * grid_.order + i];
        const ProxResult r = prox_solve(loss, target, 0.0, omega, v, cache);
        cache = r.h;
        part.g += w * r.g;
        part.dg += w * r.dg;
        part.g2 += w * r.g * r.g;
        part.gz += w * r.g * z;
        part.value += w * r.value;
        part.loss += w * loss.value(target, 0.0, r.h);
      }
      mom.g += py * part.g;
      mom.dg += py * part.dg;
      mom.mg += py * sign * part.g;
      mom.g2 += py * part.g2;
      mom.gz += py * part.gz;
      mom.value += py * part.value;
      mom.loss += py * part.loss;
    }
    return mom;
  }

  /// Conjugates as stationarity conditions of Phi in (m, dq, q).
  std::array<double, 3> hats(const Moments& mom, const State& x) const {
    const double a = p_.alpha();
    const double delta = p_.delta();
    return {a * mom.mg, a * delta * mom.g2,
            -a * std::sqrt(delta / x[1]) * mom.gz};
  }

  State entropic(const Moments& mom, const State& x) const {
    const auto [mh, qh, dqh] = hats(mom, x);
    const double den = p_.ridge_t() + dqh;
    return {mh / den, (mh * mh + qh) / (den * den), 1.0 / den};
  }

  double bias_scale(const State& x) const {
    return std::sqrt(p_.delta() * x[1]);
  }
  State scales(const State& x) const { return {std::sqrt(x[1]), x[1], x[2]}; }
  double norm(const State& x) const { return x[1]; }
  bool admissible(const State& x) const { return x[1] > 0 && x[2] > 0; }
  State project(State x) const {
    x[1] = std::max(x[1], 1e-300);
    x[2] = std::max(x[2], 1e-300);
    return x;
  }
  const char* name() const { return "solve_teacher"; }

  /// Phi at arbitrary (m, q, dq, b, mhat, qhat, dqhat).
  double free_entropy(const State& x, double b,
                      const std::array<double, 3>& h) const {
    const Moments mom = moments(x, b);
    const double den = p_.ridge_t() + h[2];
    return -(h[0] * x[0] + 0.5 * (h[1] * x[2] - h[2] * x[1])) +
           (h[0] * h[0] + h[1]) / (2.0 * den) + p_.alpha() * mom.value;
  }

 private:
  ModelParams p_;
  QuadratureGrid grid_;
  mutable std::vector<double> warm_;
};

namespace detail {

inline TeacherOrderParams pack_teacher(const ModelParams& params,
                                       const TeacherChannel& ch,
                                       const TeacherChannel::State& x,
                                       double b,
                                       const TeacherChannel::Moments& mom,
                                       int iterations) {
  TeacherOrderParams t;
  t.m_t = x[0];
  t.q_t = x[1];
  t.dq_t = x[2];
  t.b_t = b;
  const auto h = ch.hats(mom, x);
  t.mhat_t = h[0];
  t.qhat_t = h[1];
  t.dqhat_t = h[2];
  t.eg = generalization_error(x[0], x[1], b, params.delta(), params.rho());
  const double den = params.ridge_t() + h[2];
  t.free_entropy = -(h[0] * x[0] + 0.5 * (h[1] * x[2] - h[2] * x[1])) +
                   (h[0] * h[0] + h[1]) / (2.0 * den) +
                   params.alpha() * mom.value;
  t.train_loss = mom.loss;
  t.iterations = iterations;
  return t;
}

}  // namespace detail

/// Replica prediction for the teacher trained with lambda_t (and label
/// smoothing eps_smooth). `init` warm-starts the iteration, typically from the
/// neighbouring point of an alpha sweep.
inline TeacherOrderParams solve_teacher(
    const ModelParams& params, const SolverConfig& cfg = {},
    const std::optional<TeacherOrderParams>& init = std::nullopt) {
  cfg.validate();
  TeacherChannel ch(params, gauss_hermite(cfg.quad_order));
  TeacherChannel::State x{0.1, 1.0, 1.0};
  double b = 0.0;
  if (init) {
    x = {init->m_t, init->q_t, init->dq_t};
    b = init->b_t;
  }
  const auto fp = detail::iterate(ch, x, b, cfg);
  return detail::pack_teacher(params, ch, fp.x, fp.b, fp.moments,
                              fp.iterations);
}

/// Teacher free entropy at the point stored in `t`.
inline double teacher_free_entropy(const ModelParams& params,
                                   const TeacherOrderParams& t,
                                   int quad_order = 60) {
  TeacherChannel ch(params, gauss_hermite(quad_order));
  return ch.free_entropy({t.m_t, t.q_t, t.dq_t}, t.b_t,
                         {t.mhat_t, t.qhat_t, t.dqhat_t});
}

}  // namespace kdreplica
