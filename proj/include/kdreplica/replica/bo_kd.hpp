#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kdreplica/core/losses.hpp"
#include "kdreplica/core/params.hpp"
#include "kdreplica/estimators/estimators.hpp"
#include "kdreplica/replica/kd.hpp"
#include "kdreplica/replica/prox.hpp"
#include "kdreplica/replica/quadrature.hpp"
#include "kdreplica/replica/solver_common.hpp"

namespace kdreplica {

/// Shape of the proxy teacher field
///   h_t = (2y - 1) + b_t + sqrt(Delta (1 +/- Delta/alpha)) z_t.
/// The defaults are the variant whose test error equals the Bayes-optimal
/// error; the alternatives are kept so that the choice stays checkable.
struct BoTeacherField {
  bool minus_root = false;       // 1 - Delta/alpha under the root
  bool plain_delta_bias = false; // b_t = Delta/2 log(rho/(1-rho))

  double norm(const ModelParams& p) const {
    const double r = p.delta() / p.alpha();
    const double qt = minus_root ? 1.0 - r : 1.0 + r;
    if (!(qt > 0.0)) {
      throw std::invalid_argument(
          "BoTeacherField: 1 - Delta/alpha <= 0 under the root");
    }
    return qt;
  }

  double bias(const ModelParams& p) const {
    const double scale = plain_delta_bias
                             ? p.delta()
                             : p.delta() * (1.0 + p.delta() / p.alpha());
    return 0.5 * scale * std::log(p.rho() / (1.0 - p.rho()));
  }
};

/// Test error of the proxy teacher described by `field`.
inline double bo_teacher_error(const ModelParams& p,
                               const BoTeacherField& field = {}) {
  return generalization_error(1.0, field.norm(p), field.bias(p), p.delta(),
                              p.rho());
}

/// Energetic channel of distillation from the proxy teacher
/// w_t = v + sqrt(Delta/alpha) h. Internally S is the overlap w.h/N; the
/// teacher-student overlap is C = m + sqrt(Delta/alpha) S.
class BoKdChannel {
 public:
  struct Moments {
    double g = 0, dg = 0;
    double mg = 0, g2 = 0, gz = 0, gzt = 0;
    double value = 0, loss = 0, out_mse = 0, pre_mse = 0;
  };
  using State = std::array<double, 4>;  // m, q, dq, S

  BoKdChannel(const ModelParams& params, QuadratureGrid grid,
              BoTeacherField field = {})
      : p_(params), grid_(std::move(grid)), field_(field),
        qt_(1.0 + params.delta() / params.alpha()),
        ht_scale_(std::sqrt(params.delta() * field.norm(params))),
        bt_(field.bias(params)) {
    warm_.assign(2 * grid_.order * grid_.order,
                 std::numeric_limits<double>::quiet_NaN());
  }

  double overlap(const State& x) const {
    return x[0] + std::sqrt(p_.delta() / p_.alpha()) * x[3];
  }

  Moments moments(const State& x, double b) const {
    const int n = grid_.order;
    const double delta = p_.delta();
    const double c = overlap(x);
    const double sz = sigma_z(x);
    const double czt = std::sqrt(delta / qt_) * c;
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
        const double ht = sign + bt_ + ht_scale_ * zt;
        const double sig_t = sigmoid(ht);
        const double base = czt * zt + sign * x[0] + b;
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
      mom.value += py * part.value;
      mom.loss += py * part.loss;
      mom.out_mse += py * part.out_mse;
      mom.pre_mse += py * part.pre_mse;
    }
    return mom;
  }

  /// (mhat, qhat, dqhat, Shat).
  std::array<double, 4> hats(const Moments& mom, const State& x) const {
    const double a = p_.alpha();
    const double delta = p_.delta();
    const double sz = sigma_z(x);
    const double c = overlap(x);
    const double d_c = mom.gz * (-delta * c / (qt_ * sz)) +
                       std::sqrt(delta / qt_) * mom.gzt;
    const double d_q = mom.gz * delta / (2.0 * sz);
    return {a * (mom.mg + d_c), a * delta * mom.g2, -2.0 * a * d_q,
            a * std::sqrt(delta / a) * d_c};
  }

  State entropic(const Moments& mom, const State& x) const {
    const auto [mh, qh, dqh, sh] = hats(mom, x);
    const double eta = p_.eta();
    const double den = p_.ridge_s() + dqh;
    return {eta * mh / den, eta * (mh * mh + sh * sh + qh) / (den * den),
            eta / den, eta * sh / den};
  }

  double entropic_term(const std::array<double, 4>& h) const {
    const double den = p_.ridge_s() + h[2];
    return p_.eta() * (h[0] * h[0] + h[3] * h[3] + h[1]) / (2.0 * den);
  }

  double free_entropy(const State& x, double b,
                      const std::array<double, 4>& h) const {
    const Moments mom = moments(x, b);
    const double inter =
        h[0] * x[0] + h[3] * x[3] + 0.5 * (h[1] * x[2] - h[2] * x[1]);
    return -inter + entropic_term(h) + p_.alpha() * mom.value;
  }

  double bias_scale(const State& x) const {
    return std::sqrt(p_.delta() * x[1]);
  }
  State scales(const State& x) const {
    const double sq = std::sqrt(x[1]);
    return {sq, x[1], x[2], sq};
  }
  double norm(const State& x) const { return x[1]; }
  bool admissible(const State& x) const {
    const double c = overlap(x);
    return x[1] > 0 && x[2] > 0 && c * c < x[1] * qt_;
  }
  State project(State x) const {
    x[1] = std::max(x[1], 1e-300);
    x[2] = std::max(x[2], 1e-300);
    return x;
  }
  const char* name() const { return "solve_bo_kd"; }

  double teacher_norm() const { return qt_; }
  double teacher_bias() const { return bt_; }

 private:
  double sigma_z(const State& x) const {
    const double c = overlap(x);
    const double resid = x[1] - c * c / qt_;
    return std::sqrt(p_.delta() * std::max(resid, 1e-14 * x[1]));
  }

  ModelParams p_;
  QuadratureGrid grid_;
  BoTeacherField field_;
  double qt_;
  double ht_scale_;
  double bt_;
  mutable std::vector<double> warm_;
};

/// Replica prediction for the student distilled from the proxy teacher. In
/// the result, `s` is the teacher-student overlap w.w_t/N, `shat` is
/// conjugate to the noise overlap w.h/N, and ds = dshat = 0.
inline StudentOrderParams solve_bo_kd(
    const ModelParams& params, const SolverConfig& cfg = {},
    const std::optional<StudentOrderParams>& init = std::nullopt,
    const BoTeacherField& field = {}) {
  cfg.validate();
  BoKdChannel ch(params, gauss_hermite(cfg.quad_order), field);
  const double root = std::sqrt(params.delta() / params.alpha());
  BoKdChannel::State x{0.1, 1.0, 1.0, 0.0};
  double b = 0.0;
  if (init) {
    x = {init->m, init->q, init->dq, (init->s - init->m) / root};
    b = init->b;
  }
  const auto fp = detail::iterate(ch, x, b, cfg);

  StudentOrderParams s;
  s.m = fp.x[0];
  s.q = fp.x[1];
  s.dq = fp.x[2];
  s.s = ch.overlap(fp.x);
  s.b = fp.b;
  const auto h = ch.hats(fp.moments, fp.x);
  s.mhat = h[0];
  s.qhat = h[1];
  s.dqhat = h[2];
  s.shat = h[3];
  s.eg = generalization_error(s.m, s.q, s.b, params.delta(), params.rho());
  const double inter = h[0] * fp.x[0] + h[3] * fp.x[3] +
                       0.5 * (h[1] * fp.x[2] - h[2] * fp.x[1]);
  s.free_entropy =
      -inter + ch.entropic_term(h) + params.alpha() * fp.moments.value;
  s.train_loss = fp.moments.loss;
  s.out_mse = fp.moments.out_mse;
  s.pre_mse = fp.moments.pre_mse;
  s.iterations = fp.iterations;
  return s;
}

/// Free entropy of the proxy-teacher problem at the point stored in `s`.
inline double bo_kd_free_entropy(const ModelParams& params,
                                 const StudentOrderParams& s,
                                 int quad_order = 60,
                                 const BoTeacherField& field = {}) {
  BoKdChannel ch(params, gauss_hermite(quad_order), field);
  const double root = std::sqrt(params.delta() / params.alpha());
  return ch.free_entropy({s.m, s.q, s.dq, (s.s - s.m) / root}, s.b,
                         {s.mhat, s.qhat, s.dqhat, s.shat});
}

}  // namespace kdreplica
