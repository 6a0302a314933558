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
#include "kdreplica/replica/teacher.hpp"

namespace kdreplica {

/// Zero-temperature fixed point of the eta-sparse student. `s` is the
/// teacher-student overlap w.w_t/N; `ds` its rescaled variance.
struct StudentOrderParams {
  double m = 0.1;
  double q = 1.0;
  double dq = 1.0;
  double b = 0.0;
  double s = 0.0;
  double ds = 0.0;
  double mhat = 0.0;
  double qhat = 0.0;
  double dqhat = 0.0;
  double shat = 0.0;
  double dshat = 0.0;

  double eg = 0.0;
  double free_entropy = 0.0;
  double train_loss = 0.0;  // mean distillation loss per pattern
  double out_mse = 0.0;     // E (sigma(h_t) - sigma(h))^2 on training points
  double pre_mse = 0.0;     // E (h_t - h)^2 on training points
  int iterations = 0;
};

/// Energetic channel of distillation from a trained teacher. For every label
/// and teacher node z_t the teacher prox is solved once; the student field is
///   A = sqrt(Delta (q - S^2/q_t)) z + sqrt(Delta) dS / sqrt(dq_t) u_t*
///       + sqrt(Delta / q_t) S z_t + (2y - 1) m + b.
class KdChannel {
 public:
  struct Moments {
    double g = 0, dg = 0;
    double mg = 0;    // E (2y-1) g
    double g2 = 0;    // E g^2
    double gz = 0;    // E g z
    double gzt = 0;   // E g z_t
    double gut = 0;   // E g u_t*
    double value = 0;
    double loss = 0;
    double out_mse = 0;
    double pre_mse = 0;
  };
  using State = std::array<double, 5>;  // m, q, dq, S, dS

  KdChannel(const ModelParams& params, const TeacherOrderParams& teacher,
            QuadratureGrid grid)
      : p_(params), t_(teacher), grid_(std::move(grid)) {
    const int n = grid_.order;
    teacher_h_.resize(2 * n);
    teacher_u_.resize(2 * n);
    warm_.assign(2 * n * n, std::numeric_limits<double>::quiet_NaN());
    const double delta = p_.delta();
    const double sq = std::sqrt(delta * t_.q_t);
    const double v = std::sqrt(delta * t_.dq_t);
    for (int label = 0; label <= 1; ++label) {
      const double target = smooth_label(label, p_.eps_smooth());
      for (int j = 0; j < n; ++j) {
        const double omega =
            sq * grid_.nodes[j] + (2.0 * label - 1.0) * t_.m_t + t_.b_t;
        const ProxResult r = prox_logistic(target, omega, v);
        teacher_h_[label * n + j] = r.h;
        teacher_u_[label * n + j] = r.u_star;
      }
    }
  }

  Moments moments(const State& x, double b) const {
    const int n = grid_.order;
    const double delta = p_.delta();
    const double sz = sigma_z(x);
    const double cu = std::sqrt(delta / t_.dq_t) * x[4];
    const double czt = std::sqrt(delta / t_.q_t) * x[3];
    const double v = std::sqrt(delta * x[2]);
    const KdLoss loss = KdLoss::from(p_);
    Moments mom;
    for (int label = 1; label >= 0; --label) {
      const double py = label == 1 ? p_.rho() : 1.0 - p_.rho();
      const double sign = 2.0 * label - 1.0;
      const double target = smooth_label(label, p_.eps_smooth());
      Moments part;
      for (int j = 0; j < n; ++j) {
        const double zt = grid_.nodes[j];
        const double ht = teacher_h_[label * n + j];
        const double ut = teacher_u_[label * n + j];
        const double base = cu * ut + czt * zt + sign * x[0] + b;
        const double sig_t = sigmoid(ht);
        Moments row;
        for (int i = 0; i < n; ++i) {
          const double z = grid_.nodes[i];
          const double w = grid_.weights[i];
          double& cache = warm_[(label * n + j) * n + i];
          const ProxResult r =
              prox_solve(loss, target, ht, sz * z + base, v, cache);
          cache = r.h;
          row.g += w * r.g;
          row.dg += w * r.dg;
          row.g2 += w * r.g * r.g;
          row.gz += w * r.g * z;
          row.value += w * r.value;
          row.loss += w * loss.value(target, ht, r.h);
          const double dout = sig_t - sigmoid(r.h);
          row.out_mse += w * dout * dout;
          row.pre_mse += w * (ht - r.h) * (ht - r.h);
        }
        const double wt = grid_.weights[j];
        part.g += wt * row.g;
        part.dg += wt * row.dg;
        part.g2 += wt * row.g2;
        part.gz += wt * row.gz;
        part.gzt += wt * row.g * zt;
        part.gut += wt * row.g * ut;
        part.value += wt * row.value;
        part.loss += wt * row.loss;
        part.out_mse += wt * row.out_mse;
        part.pre_mse += wt * row.pre_mse;
      }
      mom.g += py * part.g;
      mom.dg += py * part.dg;
      mom.mg += py * sign * part.g;
      mom.g2 += py * part.g2;
      mom.gz += py * part.gz;
      mom.gzt += py * part.gzt;
      mom.gut += py * part.gut;
      mom.value += py * part.value;
      mom.loss += py * part.loss;
      mom.out_mse += py * part.out_mse;
      mom.pre_mse += py * part.pre_mse;
    }
    return mom;
  }

  /// (mhat, qhat, dqhat, Shat, dShat): Shat is conjugate to dS, dShat to S.
  std::array<double, 5> hats(const Moments& mom, const State& x) const {
    const double a = p_.alpha();
    const double delta = p_.delta();
    const double sz = sigma_z(x);
    const double d_q = mom.gz * delta / (2.0 * sz);
    const double d_s = mom.gz * (-delta * x[3] / (t_.q_t * sz)) +
                       std::sqrt(delta / t_.q_t) * mom.gzt;
    const double d_ds = std::sqrt(delta / t_.dq_t) * mom.gut;
    return {a * mom.mg, a * delta * mom.g2, -2.0 * a * d_q, a * d_ds, a * d_s};
  }

  State entropic(const Moments& mom, const State& x) const {
    return entropic_from_hats(hats(mom, x));
  }

  State entropic_from_hats(const std::array<double, 5>& h) const {
    const auto [mh, qh, dqh, sh, dsh] = h;
    const double eta = p_.eta();
    const double lt = 1.0 / (p_.ridge_t() + t_.dqhat_t);
    const double kappa = dsh * lt;
    const double den = p_.ridge_s() + dqh;
    const double a = mh + kappa * t_.mhat_t;
    const double r = a * a + qh + 2.0 * kappa * sh + kappa * kappa * t_.qhat_t;
    return {eta * a / den, eta * r / (den * den), eta / den,
            eta * (a * t_.mhat_t + sh + kappa * t_.qhat_t) * lt / den,
            eta * kappa / den};
  }

  /// eta g_s at the given conjugates.
  double entropic_term(const std::array<double, 5>& h) const {
    const auto [mh, qh, dqh, sh, dsh] = h;
    const double lt = 1.0 / (p_.ridge_t() + t_.dqhat_t);
    const double kappa = dsh * lt;
    const double den = p_.ridge_s() + dqh;
    const double a = mh + kappa * t_.mhat_t;
    const double r = a * a + qh + 2.0 * kappa * sh + kappa * kappa * t_.qhat_t;
    return p_.eta() * 0.5 * r / den;
  }

  double free_entropy(const State& x, double b,
                      const std::array<double, 5>& h) const {
    const Moments mom = moments(x, b);
    const double inter = h[0] * x[0] + 0.5 * (h[1] * x[2] - h[2] * x[1]) +
                         (h[3] * x[4] + h[4] * x[3]);
    return -inter + entropic_term(h) + p_.alpha() * mom.value;
  }

  double bias_scale(const State& x) const {
    return std::sqrt(p_.delta() * x[1]);
  }
  State scales(const State& x) const {
    const double sq = std::sqrt(x[1]);
    return {sq, x[1], x[2], sq * std::sqrt(t_.q_t), x[2]};
  }
  double norm(const State& x) const { return x[1]; }
  bool admissible(const State& x) const {
    return x[1] > 0 && x[2] > 0 && x[3] * x[3] < x[1] * t_.q_t;
  }
  State project(State x) const {
    x[1] = std::max(x[1], 1e-300);
    x[2] = std::max(x[2], 1e-300);
    return x;
  }
  const char* name() const { return "solve_kd"; }

 private:
  double sigma_z(const State& x) const {
    const double resid = x[1] - x[3] * x[3] / t_.q_t;
    return std::sqrt(p_.delta() * std::max(resid, 1e-14 * x[1]));
  }

  ModelParams p_;
  TeacherOrderParams t_;
  QuadratureGrid grid_;
  std::vector<double> teacher_h_;
  std::vector<double> teacher_u_;
  mutable std::vector<double> warm_;
};

namespace detail {

inline StudentOrderParams pack_student(const ModelParams& params,
                                       const KdChannel& ch,
                                       const KdChannel::State& x, double b,
                                       const KdChannel::Moments& mom,
                                       int iterations) {
  StudentOrderParams s;
  s.m = x[0];
  s.q = x[1];
  s.dq = x[2];
  s.s = x[3];
  s.ds = x[4];
  s.b = b;
  const auto h = ch.hats(mom, x);
  s.mhat = h[0];
  s.qhat = h[1];
  s.dqhat = h[2];
  s.shat = h[3];
  s.dshat = h[4];
  s.eg = generalization_error(x[0], x[1], b, params.delta(), params.rho());
  const double inter = h[0] * x[0] + 0.5 * (h[1] * x[2] - h[2] * x[1]) +
                       (h[3] * x[4] + h[4] * x[3]);
  s.free_entropy = -inter + ch.entropic_term(h) + params.alpha() * mom.value;
  s.train_loss = mom.loss;
  s.out_mse = mom.out_mse;
  s.pre_mse = mom.pre_mse;
  s.iterations = iterations;
  return s;
}

}  // namespace detail

/// Replica prediction for the student distilled from `teacher` (a converged
/// solve_teacher result for the same params).
inline StudentOrderParams solve_kd(
    const ModelParams& params, const TeacherOrderParams& teacher,
    const SolverConfig& cfg = {},
    const std::optional<StudentOrderParams>& init = std::nullopt) {
  cfg.validate();
  KdChannel ch(params, teacher, gauss_hermite(cfg.quad_order));
  KdChannel::State x{0.1, 1.0, 1.0, 0.0, 0.0};
  double b = 0.0;
  if (init) {
    x = {init->m, init->q, init->dq, init->s, init->ds};
    b = init->b;
  }
  const auto fp = detail::iterate(ch, x, b, cfg);
  return detail::pack_student(params, ch, fp.x, fp.b, fp.moments,
                              fp.iterations);
}

/// Distillation free entropy at the point stored in `s`.
inline double kd_free_entropy(const ModelParams& params,
                              const TeacherOrderParams& teacher,
                              const StudentOrderParams& s,
                              int quad_order = 60) {
  KdChannel ch(params, teacher, gauss_hermite(quad_order));
  return ch.free_entropy({s.m, s.q, s.dq, s.s, s.ds}, s.b,
                         {s.mhat, s.qhat, s.dqhat, s.shat, s.dshat});
}

}  // namespace kdreplica
